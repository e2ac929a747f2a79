"""
Forwarder client for any database speaking the ``POST /write`` interface.
"""

from typing import List, Optional

import requests

from ..errors import RemoteRejected, Unreachable
from ..lineproto import Metric, serialize_batch
from ..logs import get_logger
from .base import StorageBackend

logger = get_logger(__name__)


def forward(
    url: str,
    db: str,
    batch: str,
    timeout: float = 5.0,
    session: Optional[requests.Session] = None,
) -> bool:
    """
    Deliver a canonical line-protocol batch to ``url``'s write endpoint.

    Returns:
        True once the remote acknowledged the batch

    Raises:
        Unreachable: connection failure, timeout or server error; retry later
        RemoteRejected: 4xx answer; the batch can never succeed
    """
    http = session or requests
    try:
        response = http.post(
            url.rstrip("/") + "/write",
            params={"db": db},
            data=batch.encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
            timeout=timeout,
        )
    except requests.RequestException as e:
        raise Unreachable(f"{url}: {e}") from e

    if 200 <= response.status_code < 300:
        return True
    if 400 <= response.status_code < 500:
        raise RemoteRejected(
            f"{url} rejected batch for '{db}': {response.status_code} {response.text.strip()}",
            status=response.status_code,
        )
    raise Unreachable(f"{url} answered {response.status_code}")


class ForwardBackend(StorageBackend):
    """Storage backend that forwards every batch to a remote write endpoint."""

    def __init__(self, url: str, timeout: float = 5.0):
        self.url = url
        self.timeout = timeout
        self.session = requests.Session()

    def get_name(self) -> str:
        return "forward"

    def write_points(self, db: str, metrics: List[Metric]) -> int:
        if not metrics:
            return 0
        forward(self.url, db, serialize_batch(metrics), self.timeout, self.session)
        logger.debug("batch_forwarded", url=self.url, db=db, lines=len(metrics))
        return len(metrics)

    def close(self) -> None:
        self.session.close()
