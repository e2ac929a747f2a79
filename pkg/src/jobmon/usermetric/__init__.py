"""Application-level annotation client and command-line sender."""

from .client import ClientConfig, ClientConfigSection, UserMetricClient

__all__ = ["ClientConfig", "ClientConfigSection", "UserMetricClient"]
