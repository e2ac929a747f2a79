"""
Topic-prefix publish/subscribe fan-out.

Messages have two frames, topic and payload. Every subscriber owns a bounded
queue; when it is full the message is dropped for that subscriber only, so a
slow consumer never holds up ingestion.
"""

import queue
import threading
from dataclasses import dataclass
from typing import Callable, List, Optional

from ..logs import get_logger

logger = get_logger(__name__)

METRICS_TOPIC = "metrics."
JOB_START_TOPIC = "meta.job_start"
JOB_END_TOPIC = "meta.job_end"


@dataclass(frozen=True)
class BusMessage:
    """``metrics.<db>`` carries a line-protocol batch, ``meta.*`` a signal document."""
    topic: str
    payload: str

    def frames(self) -> List[bytes]:
        return [self.topic.encode("utf-8"), self.payload.encode("utf-8")]


class Subscription:
    """
    A bounded queue of messages under ``prefix``. ``notify`` is called from the
    publishing thread after each queued message.
    """

    def __init__(
        self, bus: "Bus", prefix: str, maxsize: int, notify: Optional[Callable[[], None]] = None
    ):
        self.bus = bus
        self.prefix = prefix
        self.dropped = 0
        self.notify = notify
        self._queue: "queue.Queue[BusMessage]" = queue.Queue(maxsize=maxsize)

    def offer(self, message: BusMessage) -> bool:
        try:
            self._queue.put_nowait(message)
        except queue.Full:
            self.dropped += 1
            return False
        if self.notify is not None:
            self.notify()
        return True

    def get(self, timeout: Optional[float] = None) -> Optional[BusMessage]:
        """Next message, or None when ``timeout`` expires."""
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> List[BusMessage]:
        messages = []
        while True:
            try:
                messages.append(self._queue.get_nowait())
            except queue.Empty:
                return messages

    def close(self) -> None:
        self.bus.unsubscribe(self)


class Bus:
    def __init__(self, queue_size: int = 1000):
        self.queue_size = queue_size
        self.dropped = 0
        self.published = 0
        self._lock = threading.Lock()
        self._subscribers: tuple = ()

    def subscribe(
        self,
        prefix: str = "",
        maxsize: Optional[int] = None,
        notify: Optional[Callable[[], None]] = None,
    ) -> Subscription:
        subscription = Subscription(self, prefix, maxsize or self.queue_size, notify)
        with self._lock:
            self._subscribers = self._subscribers + (subscription,)
        logger.info("bus_subscribed", prefix=prefix)
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        with self._lock:
            self._subscribers = tuple(s for s in self._subscribers if s is not subscription)

    def has_subscribers(self, topic: Optional[str] = None) -> bool:
        if topic is None:
            return bool(self._subscribers)
        return any(topic.startswith(s.prefix) for s in self._subscribers)

    def publish(self, message: BusMessage) -> int:
        """Deliver to every subscriber whose prefix matches; returns the delivered count."""
        delivered = 0
        for subscription in self._subscribers:
            if not message.topic.startswith(subscription.prefix):
                continue
            if subscription.offer(message):
                delivered += 1
            else:
                self.dropped += 1
                logger.debug("bus_message_dropped", topic=message.topic, prefix=subscription.prefix)
        self.published += 1
        return delivered
