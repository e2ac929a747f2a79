"""
Storage backend interface.
"""

from abc import ABC, abstractmethod
from typing import List

from ..lineproto import Metric


class StorageBackend(ABC):
    """
    Abstract base class for metric sinks.

    Subclasses must implement:
    - get_name(): Return a short backend name for logs and health output
    - write_points(): Persist a batch of stamped metrics
    """

    @abstractmethod
    def get_name(self) -> str:
        """Return the backend name."""
        pass

    @abstractmethod
    def write_points(self, db: str, metrics: List[Metric]) -> int:
        """
        Persist ``metrics`` into database ``db``.

        Returns:
            Number of metrics written

        Raises:
            StorageError: the batch was not persisted and may be retried
        """
        pass

    def close(self) -> None:
        """Release files or connections."""
