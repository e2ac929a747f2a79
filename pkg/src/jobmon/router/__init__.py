"""
Metrics router: write-endpoint mimicry, job signals, enrichment, duplication and
bus publishing.
"""

from .bus import Bus, BusMessage, Subscription
from .config import RouteConfig, RouteConfigSection
from .core import MetricsRouter, RouterResponse
from .retry import RetryBuffer

__all__ = [
    'Bus', 'BusMessage', 'Subscription', 'RouteConfig', 'RouteConfigSection',
    'MetricsRouter', 'RouterResponse', 'RetryBuffer',
]
