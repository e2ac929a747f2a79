"""
Application-level metric client.

Buffers values and events with default tags and sends them to the router's
``/write`` endpoint in line-protocol batches. A batch goes out when the buffer
reaches ``flush_threshold`` lines or ``flush_interval`` seconds after the last
send, whichever comes first; ``close()`` (or interpreter exit) sends what is left.

    with UserMetricClient() as um:
        um.add_event("job_phase", "miniMD start")
        um.add_value("pressure", 1.41, {"tid": "0"})
"""

import atexit
import socket
import threading
import weakref
from dataclasses import dataclass, field
from numbers import Real
from typing import Any, Dict, List, Mapping, Optional

import requests

from ..config import ConfigSection
from ..errors import ConfigError, EndpointUnreachable
from ..jobtags import HOSTNAME_TAG
from ..lineproto import Metric, serialize_batch, validate_metric
from ..logs import get_logger

logger = get_logger(__name__)

VALUE_FIELD = "value"
EVENT_FIELD = "text"


class ClientConfigSection(ConfigSection):
    section_name = "usermetric"
    env_overrides = {"url": "USERMETRIC_URL", "db": "USERMETRIC_DB", "tags": "USERMETRIC_TAGS"}

    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "url": {"type": "str", "default": "http://127.0.0.1:8086",
                    "help": "Router base URL"},
            "db": {"type": "str", "default": "jobs", "help": "Target database"},
            "tags": {"type": "map", "default": {},
                     "help": "Default tags (k=v,...); hostname is added when absent"},
            "flush_threshold": {"type": "int", "default": 100, "min": 1,
                                "help": "Buffered lines that trigger a send"},
            "flush_interval": {"type": "float", "default": 5.0, "min": 0.0,
                               "help": "Seconds between timed sends (0 disables)"},
            "max_buffer": {"type": "int", "default": 10000, "min": 1,
                           "help": "Lines kept while the router is unreachable"},
            "timeout": {"type": "float", "default": 5.0, "min": 0.1},
            "exit_deadline": {"type": "float", "default": 2.0, "min": 0.0,
                              "help": "Seconds the final flush may take"},
        }


@dataclass(frozen=True)
class ClientConfig:
    url: str = "http://127.0.0.1:8086"
    db: str = "jobs"
    default_tags: Mapping[str, str] = field(default_factory=dict)
    flush_threshold: int = 100
    flush_interval: float = 5.0
    max_buffer: int = 10000
    timeout: float = 5.0
    exit_deadline: float = 2.0

    def __post_init__(self):
        if self.flush_threshold < 1:
            raise ConfigError("flush_threshold must be at least 1")
        if self.max_buffer < self.flush_threshold:
            raise ConfigError("max_buffer must hold at least flush_threshold lines")
        tags = dict(self.default_tags)
        if not tags.get(HOSTNAME_TAG):
            tags[HOSTNAME_TAG] = socket.gethostname()
        object.__setattr__(self, "default_tags", tags)
        object.__setattr__(self, "url", self.url.rstrip("/"))

    @property
    def write_url(self) -> str:
        return f"{self.url}/write"

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "ClientConfig":
        params = dict(params)
        params["default_tags"] = params.pop("tags")
        return cls(**params)

    @classmethod
    def load(cls, path=None, overrides: Optional[Mapping[str, Any]] = None,
             environ: Optional[Mapping[str, str]] = None) -> "ClientConfig":
        """Defaults, then ``path``, then USERMETRIC_* variables, then ``overrides``."""
        return cls.from_params(ClientConfigSection().load(path, overrides, environ))


_open_clients: "weakref.WeakSet[UserMetricClient]" = weakref.WeakSet()


@atexit.register
def _close_open_clients() -> None:
    for client in list(_open_clients):
        client.close()


class UserMetricClient:
    """
    Thread-safe: ``add_*`` may be called from any thread of the instrumented
    application; sends are serialized.

    Args:
        config: Endpoint, database, default tags and batching limits
            (``ClientConfig.load()`` when omitted)
        session: HTTP session, mainly for tests
        start_timer: Run the background thread for timed and threshold sends
    """

    def __init__(
        self,
        config: Optional[ClientConfig] = None,
        session: Optional[requests.Session] = None,
        start_timer: bool = True,
    ):
        self.config = config or ClientConfig.load()
        self.session = session or requests.Session()
        self.sent_lines = 0
        self.dropped_lines = 0
        self.rejected_lines = 0
        self.closed = False

        self._buffer: List[Metric] = []
        self._lock = threading.Lock()
        self._flush_lock = threading.Lock()
        self._wakeup = threading.Event()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        if start_timer:
            self._thread = threading.Thread(
                target=self._run, name="usermetric-flush", daemon=True
            )
            self._thread.start()
        _open_clients.add(self)

    def __enter__(self) -> "UserMetricClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __len__(self) -> int:
        return len(self._buffer)

    # Buffering

    def _tags(self, tags: Optional[Mapping[str, Any]]) -> Dict[str, str]:
        merged = dict(self.config.default_tags)
        for key, value in (tags or {}).items():
            if key != HOSTNAME_TAG:
                merged[str(key)] = str(value)
        return merged

    def _append(self, metric: Metric) -> None:
        if self.closed:
            raise RuntimeError("usermetric client is closed")
        validate_metric(metric)
        with self._lock:
            self._buffer.append(metric)
            overflow = len(self._buffer) - self.config.max_buffer
            if overflow > 0:
                del self._buffer[:overflow]
                self.dropped_lines += overflow
                logger.warning("usermetric_buffer_full", dropped=overflow)
            full = len(self._buffer) >= self.config.flush_threshold
        if full:
            self._wakeup.set()

    def add_value(self, name: str, value: Real, tags: Optional[Mapping[str, Any]] = None,
                  timestamp: Optional[int] = None) -> None:
        """
        Buffer one numeric sample; ``timestamp`` None leaves stamping to the router.

        Raises:
            TypeError: ``value`` is not a number
            InvalidMetric: empty name or tag key, or a non-finite value
        """
        if isinstance(value, bool) or not isinstance(value, Real):
            raise TypeError(f"{name}: value must be a number, got {type(value).__name__}")
        self._append(Metric(name, self._tags(tags), {VALUE_FIELD: float(value)}, timestamp))

    def add_event(self, name: str, text: str, tags: Optional[Mapping[str, Any]] = None,
                  timestamp: Optional[int] = None) -> None:
        """Buffer one event; dashboards draw these as annotations."""
        self._append(Metric(name, self._tags(tags), {EVENT_FIELD: str(text)}, timestamp))

    # Sending

    def flush(self, timeout: Optional[float] = None) -> int:
        """
        Send everything buffered as one write; returns the number of lines the router
        accepted, 0 when it rejected the batch (counted in ``rejected_lines``).

        Raises:
            EndpointUnreachable: the router could not be reached; lines stay buffered
        """
        with self._flush_lock:
            with self._lock:
                batch, self._buffer = self._buffer, []
            if not batch:
                return 0
            try:
                return self._send(batch, timeout if timeout is not None else self.config.timeout)
            except EndpointUnreachable:
                self._requeue(batch)
                raise

    def _send(self, batch: List[Metric], timeout: float) -> int:
        body = serialize_batch(batch).encode("utf-8")
        try:
            response = self.session.post(
                self.config.write_url, params={"db": self.config.db}, data=body, timeout=timeout
            )
        except requests.RequestException as e:
            raise EndpointUnreachable(f"{self.config.url}: {e}") from e
        if response.status_code >= 500:
            raise EndpointUnreachable(f"{self.config.url}: HTTP {response.status_code}")
        if response.status_code >= 400:
            # resending a rejected batch cannot succeed
            self.rejected_lines += len(batch)
            logger.warning("usermetric_batch_rejected", status=response.status_code,
                           lines=len(batch), reason=response.text.strip())
            return 0
        self.sent_lines += len(batch)
        logger.debug("usermetric_flushed", lines=len(batch))
        return len(batch)

    def _requeue(self, batch: List[Metric]) -> None:
        with self._lock:
            self._buffer = batch + self._buffer
            overflow = len(self._buffer) - self.config.max_buffer
            if overflow > 0:
                del self._buffer[:overflow]
                self.dropped_lines += overflow
                logger.warning("usermetric_buffer_full", dropped=overflow)

    def _run(self) -> None:
        interval = self.config.flush_interval or None
        while not self._stop.is_set():
            self._wakeup.wait(timeout=interval)
            self._wakeup.clear()
            if self._stop.is_set():
                break
            try:
                self.flush()
            except EndpointUnreachable as e:
                logger.warning("usermetric_flush_failed", error=str(e), buffered=len(self))

    def close(self, final_flush: bool = True) -> None:
        """Stop timed sends and make one final, deadline-bounded flush."""
        if self.closed:
            return
        self.closed = True
        _open_clients.discard(self)
        self._stop.set()
        self._wakeup.set()
        if self._thread is not None:
            self._thread.join(timeout=self.config.timeout)
        if not final_flush:
            self.session.close()
            return
        try:
            self.flush(timeout=min(self.config.timeout, self.config.exit_deadline) or 0.1)
        except EndpointUnreachable as e:
            logger.warning("usermetric_final_flush_failed", error=str(e), lost=len(self))
        self.session.close()
