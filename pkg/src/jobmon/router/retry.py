"""
Bounded retry buffer between the router and its storage backend.

Batches are delivered strictly in arrival order. While the backend is down they
wait in a bounded queue; when the queue overflows the oldest batch is dropped
and counted. A batch that can never be stored (rejected as malformed, an invalid
database name, an invalid metric) is dropped at once.
"""

import threading
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional

from ..errors import InvalidMetric, RemoteRejected, StorageError, UnknownDatabase
from ..lineproto import Metric
from ..logs import get_logger
from ..tsstore.base import StorageBackend

logger = get_logger(__name__)


@dataclass
class PendingBatch:
    db: str
    metrics: List[Metric]

    @property
    def lines(self) -> int:
        return len(self.metrics)


class RetryBuffer:
    """
    Args:
        backend: Where batches are delivered
        capacity: Maximum number of batches held while the backend is down
        inline: Attempt delivery inside ``submit`` (local backends); otherwise a
            background thread started with ``start()`` delivers
    """

    def __init__(self, backend: StorageBackend, capacity: int = 1000, inline: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.backend = backend
        self.capacity = capacity
        self.inline = inline

        self.delivered_batches = 0
        self.delivered_lines = 0
        self.dropped_batches = 0
        self.dropped_lines = 0
        self.rejected_batches = 0
        self.healthy = True

        self._queue: Deque[PendingBatch] = deque()
        self._queue_lock = threading.Lock()
        self._flush_lock = threading.Lock()
        self._wakeup = threading.Event()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def __len__(self) -> int:
        return len(self._queue)

    def submit(self, db: str, metrics: List[Metric]) -> None:
        """Queue one batch for ``db``; never raises on backend trouble."""
        if not metrics:
            return
        with self._queue_lock:
            self._queue.append(PendingBatch(db, metrics))
            while len(self._queue) > self.capacity:
                oldest = self._queue.popleft()
                self.dropped_batches += 1
                self.dropped_lines += oldest.lines
                logger.warning(
                    "batch_dropped", db=oldest.db, lines=oldest.lines, reason="buffer_full"
                )
        if self.inline:
            self.flush_with_retry()
        else:
            self._wakeup.set()

    def flush_with_retry(self) -> int:
        """
        Deliver queued batches in order until the queue is empty or the backend
        fails; returns the number of batches delivered by this call.
        """
        delivered = 0
        with self._flush_lock:
            while True:
                with self._queue_lock:
                    if not self._queue:
                        break
                    batch = self._queue[0]
                try:
                    self.backend.write_points(batch.db, batch.metrics)
                except (RemoteRejected, UnknownDatabase, InvalidMetric, ValueError) as e:
                    # retrying cannot help
                    self._discard(batch)
                    self.rejected_batches += 1
                    self.dropped_batches += 1
                    self.dropped_lines += batch.lines
                    logger.warning("batch_dropped", db=batch.db, lines=batch.lines, reason=str(e))
                    continue
                except StorageError as e:
                    if self.healthy:
                        logger.warning("backend_unavailable", backend=self.backend.get_name(),
                                       error=str(e), queued=len(self._queue))
                    self.healthy = False
                    break

                self._discard(batch)
                delivered += 1
                self.delivered_batches += 1
                self.delivered_lines += batch.lines
                if not self.healthy:
                    logger.info("backend_recovered", backend=self.backend.get_name())
                    self.healthy = True
        return delivered

    def _discard(self, batch: PendingBatch) -> None:
        with self._queue_lock:
            # overflow may already have evicted it
            if self._queue and self._queue[0] is batch:
                self._queue.popleft()

    # Background delivery

    def start(self, retry_interval: float = 1.0) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(
            target=self._run, args=(retry_interval,), name="jobmon-retry", daemon=True
        )
        self._thread.start()

    def _run(self, retry_interval: float) -> None:
        while not self._stop.is_set():
            self._wakeup.wait(timeout=retry_interval)
            self._wakeup.clear()
            try:
                self.flush_with_retry()
            except Exception:
                logger.exception("retry_flush_failed")

    def stop(self, drain_timeout: float = 5.0) -> None:
        """Stop the delivery thread after one last delivery attempt."""
        if self._thread is None:
            return
        self._stop.set()
        self._wakeup.set()
        self._thread.join(timeout=drain_timeout)
        self._thread = None
        self.flush_with_retry()
