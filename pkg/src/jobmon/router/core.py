"""
Metrics router pipeline.

parse -> stamp -> enrich -> store (global and per-user databases) -> publish.
The HTTP layer in ``server.py`` is a thin adapter over ``MetricsRouter``.
"""

import json
import threading
import time
from collections import defaultdict
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Union

from ..errors import DuplicateJob, InvalidJob, JobmonError, MalformedLine, UnknownJob
from ..jobtags import USER_TAG, JobRecord, JobSignal, TagStore, jobs_from_annotations
from ..lineproto import Metric, parse_batch, serialize_batch
from ..logs import get_logger
from ..tsstore import EmbeddedStore, ForwardBackend, StorageBackend, valid_db_name
from .bus import JOB_END_TOPIC, JOB_START_TOPIC, METRICS_TOPIC, Bus, BusMessage
from .config import RouteConfig
from .retry import RetryBuffer

logger = get_logger(__name__)

SELF_MEASUREMENT = "jobmon_router"
REJECTED_HEADER = "X-Jobmon-Rejected-Lines"

# listener(event, record) with event "start" or "end"
JobListener = Callable[[str, JobRecord], None]


@dataclass
class RouterResponse:
    status: int
    body: str = ""
    headers: Dict[str, str] = field(default_factory=dict)
    content_type: str = "text/plain"


def build_backend(config: RouteConfig) -> StorageBackend:
    if config.backend == "forward":
        return ForwardBackend(config.backend_url, timeout=config.forward_timeout)
    retention_ns = int(config.retention * 1e9) if config.retention is not None else None
    return EmbeddedStore(config.store_dir, retention_ns=retention_ns)


class MetricsRouter:
    """
    Args:
        config: Route settings
        backend: Storage backend (built from ``config`` when omitted)
        tagstore: Job tag store (a fresh one when omitted)
        clock: Receipt-time source in nanoseconds
        hook_executor: Runs job listeners off the request path
    """

    def __init__(
        self,
        config: Optional[RouteConfig] = None,
        backend: Optional[StorageBackend] = None,
        tagstore: Optional[TagStore] = None,
        clock: Callable[[], int] = time.time_ns,
        hook_executor: Optional[Executor] = None,
    ):
        self.config = config or RouteConfig()
        self.backend = backend if backend is not None else build_backend(self.config)
        self.tagstore = tagstore or TagStore()
        self.bus = Bus(self.config.bus_queue_size)
        self.clock = clock
        self.buffer = RetryBuffer(
            self.backend,
            capacity=self.config.buffer_capacity,
            inline=not isinstance(self.backend, ForwardBackend),
        )
        self._listeners: List[JobListener] = []
        self._hooks = hook_executor or ThreadPoolExecutor(
            max_workers=1, thread_name_prefix="jobmon-hook"
        )
        self._counter_lock = threading.Lock()
        self.counters: Dict[str, int] = defaultdict(int)

        if isinstance(self.backend, EmbeddedStore):
            self.tagstore.restore(_recover_jobs(self.backend, self.config.global_db))

    @property
    def store(self) -> Optional[EmbeddedStore]:
        """The queryable embedded store, or None when forwarding."""
        return self.backend if isinstance(self.backend, EmbeddedStore) else None

    def _count(self, **increments: int) -> None:
        with self._counter_lock:
            for name, n in increments.items():
                self.counters[name] += n

    def add_job_listener(self, listener: JobListener) -> None:
        self._listeners.append(listener)

    # Writes

    def handle_write(
        self,
        db: Optional[str],
        body: str,
        receipt_time: Optional[int] = None,
        precision: Optional[str] = None,
    ) -> RouterResponse:
        """
        Accept a line-protocol batch for ``db``.

        204 when at least one line was accepted (or the body is empty); rejected
        lines of a partial batch are counted and reported in a response header.
        400 with a per-line report when nothing was accepted.
        """
        if not db or not valid_db_name(db):
            return RouterResponse(400, "database is required (db=<name>)\n")
        if receipt_time is None:
            receipt_time = self.clock()

        try:
            metrics, errors = parse_batch(body, precision or "ns")
        except MalformedLine as e:
            return RouterResponse(400, f"{e}\n")

        self._count(lines_received=len(metrics) + len(errors), lines_rejected=len(errors))
        if errors:
            logger.warning("lines_rejected", db=db, rejected=len(errors), accepted=len(metrics),
                           first=f"line {errors[0][0]}: {errors[0][1].reason}")
        if not metrics:
            if not errors:
                return RouterResponse(204)
            report = "".join(f"line {index}: {error.reason}\n" for index, error in errors)
            return RouterResponse(400, report)

        enriched: List[Metric] = []
        for metric in metrics:
            enriched.extend(self.tagstore.enrich(metric.stamped(receipt_time)))

        self.buffer.submit(db, enriched)
        self._count(lines_accepted=len(metrics), rows_written=len(enriched))

        if self.config.per_user_duplication:
            by_user: Dict[str, List[Metric]] = defaultdict(list)
            for metric in enriched:
                user = metric.tags.get(USER_TAG)
                if user is not None:
                    by_user[user].append(metric)
            for user, rows in by_user.items():
                self.buffer.submit(self.config.user_db(user), rows)
                self._count(user_rows_written=len(rows))

        topic = METRICS_TOPIC + db
        if self.config.bus_enabled and self.bus.has_subscribers(topic):
            self.publish(BusMessage(topic, serialize_batch(enriched)))

        logger.debug("write_accepted", db=db, lines=len(metrics), rows=len(enriched))
        headers = {REJECTED_HEADER: str(len(errors))} if errors else {}
        return RouterResponse(204, headers=headers)

    # Job signals

    def handle_job_signal(
        self, body: Union[str, bytes, Mapping[str, Any]], receipt_time: Optional[int] = None
    ) -> RouterResponse:
        """
        Apply a start/end signal, store its annotation and notify listeners.

        A start is published on the bus before the job's hosts become visible to
        ``enrich``, so no subscriber sees job-tagged metrics ahead of the start.
        """
        if receipt_time is None:
            receipt_time = self.clock()
        try:
            document = json.loads(body) if isinstance(body, (str, bytes)) else body
            signal = JobSignal.from_document(document)
            if signal.action == "start":
                record = signal.to_record(receipt_time)
                if self.config.per_user_duplication:
                    user_db = self.config.user_db(record.user)
                    if not valid_db_name(user_db):
                        raise InvalidJob(
                            f"user '{record.user}' maps to invalid database '{user_db}'"
                        )
                annotation = self.tagstore.job_start(
                    record, announce=lambda r: self._publish_signal(signal, r.start_time)
                )
            else:
                end_time = signal.timestamp if signal.timestamp is not None else receipt_time
                annotation = self.tagstore.job_end(signal.job_id, end_time)
                record = self.tagstore.get_job(signal.job_id)
        except ValueError as e:
            self._count(signals_rejected=1)
            return RouterResponse(400, f"invalid signal document: {e}\n")
        except (InvalidJob, DuplicateJob, UnknownJob) as e:
            self._count(signals_rejected=1)
            logger.warning("signal_rejected", error=type(e).__name__, reason=str(e))
            return RouterResponse(400, f"{type(e).__name__}: {e}\n")

        self._count(signals_accepted=1)
        self.buffer.submit(self.config.global_db, [annotation])
        if self.config.per_user_duplication:
            self.buffer.submit(self.config.user_db(record.user), [annotation])

        if signal.action == "end":
            self._publish_signal(signal, annotation.timestamp)

        for listener in self._listeners:
            self._hooks.submit(_run_listener, listener, signal.action, record)

        body_doc = {"status": "ok", "action": signal.action, "jobid": signal.job_id}
        return RouterResponse(200, json.dumps(body_doc), content_type="application/json")

    def _publish_signal(self, signal: JobSignal, timestamp: int) -> None:
        if not self.config.bus_enabled:
            return
        document = signal.to_document()
        document["timestamp"] = timestamp
        topic = JOB_START_TOPIC if signal.action == "start" else JOB_END_TOPIC
        self.publish(BusMessage(topic, json.dumps(document, sort_keys=True)))

    # Bus

    def publish(self, message: BusMessage) -> None:
        """Best-effort fan-out; never raises into the write path."""
        if not self.config.bus_enabled:
            return
        try:
            self.bus.publish(message)
        except Exception:
            logger.exception("bus_publish_failed", topic=message.topic)

    # Introspection

    def health(self) -> Dict[str, Any]:
        with self._counter_lock:
            counters = dict(self.counters)
        return {
            "status": "ok" if self.buffer.healthy else "degraded",
            "backend": self.backend.get_name(),
            "lines_received": counters.get("lines_received", 0),
            "lines_accepted": counters.get("lines_accepted", 0),
            "lines_rejected": counters.get("lines_rejected", 0),
            "lines_dropped": self.buffer.dropped_lines,
            "batches_dropped": self.buffer.dropped_batches,
            "batches_buffered": len(self.buffer),
            "rows_written": counters.get("rows_written", 0),
            "user_rows_written": counters.get("user_rows_written", 0),
            "signals_accepted": counters.get("signals_accepted", 0),
            "signals_rejected": counters.get("signals_rejected", 0),
            "active_jobs": len(self.tagstore.active_jobs()),
            "missing_hostname": self.tagstore.missing_hostname,
            "reserved_tags_dropped": self.tagstore.reserved_tags_dropped,
            "bus_dropped": self.bus.dropped,
        }

    def self_metric(self, now: Optional[int] = None) -> Metric:
        health = self.health()
        fields = {k: v for k, v in health.items() if isinstance(v, int) and not isinstance(v, bool)}
        return Metric(SELF_MEASUREMENT, {"backend": health["backend"]}, fields,
                      now if now is not None else self.clock())

    def write_self_metrics(self) -> None:
        self.buffer.submit(self.config.global_db, [self.self_metric()])

    def start(self) -> None:
        if not self.buffer.inline:
            self.buffer.start(self.config.retry_interval)

    def close(self) -> None:
        self._hooks.shutdown(wait=True)
        self.buffer.stop()
        self.backend.close()


def _run_listener(listener: JobListener, event: str, record: JobRecord) -> None:
    try:
        listener(event, record)
    except Exception:
        logger.exception("job_listener_failed", action=event, jobid=record.job_id)


def _recover_jobs(store: EmbeddedStore, db: str) -> List[JobRecord]:
    try:
        return jobs_from_annotations(store, db)
    except JobmonError:
        logger.exception("job_recovery_failed", db=db)
        return []
