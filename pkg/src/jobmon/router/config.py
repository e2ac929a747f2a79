"""
Router configuration.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from ..config import ConfigSection
from ..errors import ConfigError


class RouteConfigSection(ConfigSection):
    """The ``router`` section of the router's YAML file."""

    section_name = "router"
    env_overrides = {
        "listen": "JOBMON_LISTEN",
        "backend_url": "JOBMON_BACKEND_URL",
        "store_dir": "JOBMON_STORE_DIR",
    }

    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            'listen': {
                'type': 'str',
                'default': '127.0.0.1:8086',
                'help': 'host:port of the HTTP service'
            },
            'global_db': {
                'type': 'str',
                'default': 'jobs',
                'help': 'Database receiving every enriched metric and job annotation'
            },
            'per_user_duplication': {
                'type': 'bool',
                'default': False,
                'help': 'Copy job-tagged metrics into a database per user'
            },
            'user_db_pattern': {
                'type': 'str',
                'default': 'u_{user}',
                'help': 'Per-user database name; must contain {user} once'
            },
            'bus_enabled': {
                'type': 'bool',
                'default': True,
                'help': 'Publish metrics and job signals to subscribers'
            },
            'bus_queue_size': {
                'type': 'int',
                'default': 1000,
                'min': 1,
                'max': 1000000,
                'help': 'Messages buffered per subscriber before it is dropped from'
            },
            'backend': {
                'type': 'choice',
                'default': 'embedded',
                'choices': ['embedded', 'forward'],
                'help': 'Store locally or forward to another write endpoint'
            },
            'backend_url': {
                'type': 'str',
                'default': None,
                'optional': True,
                'help': 'Base URL of the forward target'
            },
            'store_dir': {
                'type': 'path',
                'default': None,
                'optional': True,
                'help': 'Segment directory of the embedded store (memory only when unset)'
            },
            'retention': {
                'type': 'float',
                'default': None,
                'optional': True,
                'min': 1.0,
                'help': 'Seconds of data kept by the embedded store (unlimited when unset)'
            },
            'buffer_capacity': {
                'type': 'int',
                'default': 1000,
                'min': 1,
                'max': 1000000,
                'help': 'Batches held while the backend is unavailable'
            },
            'retry_interval': {
                'type': 'float',
                'default': 1.0,
                'min': 0.01,
                'max': 3600.0,
                'help': 'Seconds between delivery attempts to an unavailable backend'
            },
            'forward_timeout': {
                'type': 'float',
                'default': 5.0,
                'min': 0.1,
                'max': 300.0,
                'help': 'HTTP timeout of the forwarder in seconds'
            },
            'self_metrics_interval': {
                'type': 'float',
                'default': 60.0,
                'min': 0.0,
                'help': 'Seconds between router self-metric rows (0 disables)'
            },
            'dashgen_config': {
                'type': 'path',
                'default': None,
                'optional': True,
                'help': 'Dashboard agent config; enables dashboard generation on job signals'
            },
        }

    def load(self, path=None, overrides=None, environ=None) -> Dict[str, Any]:
        environ = os.environ if environ is None else environ
        merged = dict(overrides or {})
        # a backend URL from the environment implies forwarding
        if environ.get("JOBMON_BACKEND_URL") and merged.get("backend") is None:
            merged["backend"] = "forward"
        return super().load(path, merged, environ)


@dataclass(frozen=True)
class RouteConfig:
    listen: str = "127.0.0.1:8086"
    global_db: str = "jobs"
    per_user_duplication: bool = False
    user_db_pattern: str = "u_{user}"
    bus_enabled: bool = True
    bus_queue_size: int = 1000
    backend: str = "embedded"
    backend_url: Optional[str] = None
    store_dir: Optional[str] = None
    retention: Optional[float] = None
    buffer_capacity: int = 1000
    retry_interval: float = 1.0
    forward_timeout: float = 5.0
    self_metrics_interval: float = 60.0
    dashgen_config: Optional[str] = None

    def __post_init__(self):
        if self.per_user_duplication and self.user_db_pattern.count("{user}") != 1:
            raise ConfigError("user_db_pattern must contain {user} exactly once")
        if self.backend == "forward" and not self.backend_url:
            raise ConfigError("backend 'forward' requires backend_url")
        self.listen_address()

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "RouteConfig":
        return cls(**params)

    @classmethod
    def load(
        cls,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "RouteConfig":
        return cls.from_params(RouteConfigSection().load(path, overrides, environ))

    def listen_address(self) -> Tuple[str, int]:
        host, sep, port = self.listen.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"listen must be host:port, got '{self.listen}'")
        return host or "0.0.0.0", int(port)

    def user_db(self, user: str) -> str:
        return self.user_db_pattern.replace("{user}", user)
