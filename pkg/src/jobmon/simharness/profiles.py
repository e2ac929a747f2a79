"""
Baseline node behaviours for synthetic metric streams.

Each profile gives every schema metric a baseline and a relative jitter: samples
fall within baseline * (1 +/- jitter).
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

from ..analysis.schema import require_metric
from ..errors import ConfigError


@dataclass(frozen=True)
class MetricBaseline:
    value: float
    jitter: float = 0.02

    def __post_init__(self):
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must lie in [0, 1)")
        if self.value < 0:
            raise ConfigError("baseline must not be negative")

    @property
    def bounds(self) -> Tuple[float, float]:
        return self.value * (1 - self.jitter), self.value * (1 + self.jitter)


@dataclass(frozen=True)
class Profile:
    name: str
    baselines: Mapping[str, MetricBaseline] = field(default_factory=dict)

    def __post_init__(self):
        for metric in self.baselines:
            require_metric(metric)

    @property
    def metrics(self):
        return sorted(self.baselines)

    @classmethod
    def from_dict(cls, name: str, doc: Mapping[str, object]) -> "Profile":
        """``{metric: value}`` or ``{metric: {value: v, jitter: j}}``."""
        baselines = {}
        for metric, spec in doc.items():
            try:
                if isinstance(spec, Mapping):
                    baselines[metric] = MetricBaseline(float(spec["value"]),
                                                       float(spec.get("jitter", 0.02)))
                else:
                    baselines[metric] = MetricBaseline(float(spec))
            except (KeyError, TypeError, ValueError):
                raise ConfigError(f"profile {name}: bad baseline for {metric}") from None
        return cls(name, baselines)


def _profile(name: str, jitter: float = 0.02, **values: float) -> Profile:
    return Profile(name, {m: MetricBaseline(v, jitter) for m, v in values.items()})


PROFILES: Dict[str, Profile] = {
    "healthy": _profile(
        "healthy", cpu_load=20.0, ipc=1.5, flops_dp=5000.0, mem_allocated=30e9,
        mem_bw=20000.0, net_io=50.0, file_io=5.0,
    ),
    "idle": _profile(
        "idle", cpu_load=0.02, ipc=0.1, flops_dp=0.5, mem_allocated=4e9,
        mem_bw=50.0, net_io=0.1, file_io=0.01,
    ),
    "memory-bound": _profile(
        "memory-bound", cpu_load=20.0, ipc=0.4, flops_dp=400.0, mem_allocated=60e9,
        mem_bw=55000.0, net_io=50.0, file_io=5.0,
    ),
}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(
            f"unknown profile '{name}', expected one of {', '.join(sorted(PROFILES))}"
        ) from None
