"""
Storage back-ends: the embedded time-series store and the write-endpoint forwarder.
"""

from .aggregate import AGGREGATES, aggregate_window
from .base import StorageBackend
from .embedded import EmbeddedStore, valid_db_name
from .forward import ForwardBackend, forward
from .model import Point, Series, SeriesKey, merge_series

__all__ = [
    'AGGREGATES', 'aggregate_window', 'StorageBackend', 'EmbeddedStore', 'valid_db_name',
    'ForwardBackend', 'forward', 'Point', 'Series', 'SeriesKey', 'merge_series',
]
