"""
Deterministic per-host metric streams.

A host's stream depends only on the seed and the host name, so hosts can be
emitted concurrently without changing any value.
"""

import zlib
from dataclasses import dataclass, field
from typing import Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..jobtags import HOSTNAME_TAG
from ..lineproto import Metric
from .profiles import Profile

NS_PER_SECOND = 1_000_000_000
ALL_HOSTS = "*"


@dataclass(frozen=True)
class Anomaly:
    """
    Overrides (``value``) or scales (``scale``) one metric on one host (or every
    host, ``*``) for offsets in [start, end), in ns from scenario start.
    """
    host: str
    metric: str
    start: int
    end: int
    value: Optional[float] = None
    scale: Optional[float] = None

    def applies(self, host: str, metric: str, offset: int) -> bool:
        return (
            self.host in (host, ALL_HOSTS)
            and self.metric == metric
            and self.start <= offset < self.end
        )

    def apply(self, value: float) -> float:
        if self.value is not None:
            return self.value
        return value * (self.scale if self.scale is not None else 1.0)


@dataclass(frozen=True)
class AppSeries:
    """Application-level value (e.g. pressure) sampled every tick in [start, end)."""
    host: str
    name: str
    value: float
    start: int
    end: int
    jitter: float = 0.0
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AppEvent:
    """Application-level text event sent at one offset."""
    host: str
    name: str
    text: str
    at: int
    tags: Mapping[str, str] = field(default_factory=dict)


def host_rng(host: str, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(host.encode("utf-8"))])


def host_ticks(
    host: str,
    cadence: int,
    profile: Profile,
    count: int,
    start_time: int = 0,
    seed: int = 0,
    anomalies: Sequence[Anomaly] = (),
    app_series: Sequence[AppSeries] = (),
    app_events: Sequence[AppEvent] = (),
) -> Iterator[Tuple[int, List[Metric]]]:
    """
    Yield ``(offset, metrics)`` for each of ``count`` ticks ``cadence`` ns apart;
    every metric is stamped ``start_time + offset``.
    """
    rng = host_rng(host, seed)
    metrics = profile.metrics
    mine = [a for a in anomalies if a.host in (host, ALL_HOSTS)]
    series = [s for s in app_series if s.host == host]
    events = [e for e in app_events if e.host == host]

    for k in range(count):
        offset = k * cadence
        timestamp = start_time + offset
        # one draw per metric per tick, anomalies included, keeps streams aligned
        noise = rng.uniform(-1.0, 1.0, size=len(metrics))
        batch = []
        for metric, u in zip(metrics, noise):
            baseline = profile.baselines[metric]
            value = baseline.value * (1.0 + baseline.jitter * u)
            for anomaly in mine:
                if anomaly.applies(host, metric, offset):
                    value = anomaly.apply(value)
            batch.append(Metric(metric, {HOSTNAME_TAG: host}, {"value": float(value)}, timestamp))

        for s in series:
            u = rng.uniform(-1.0, 1.0)
            if s.start <= offset < s.end:
                tags = dict(s.tags, **{HOSTNAME_TAG: host})
                batch.append(Metric(s.name, tags, {"value": s.value * (1.0 + s.jitter * u)},
                                    timestamp))
        for e in events:
            if offset <= e.at < offset + cadence:
                tags = dict(e.tags, **{HOSTNAME_TAG: host})
                batch.append(Metric(e.name, tags, {"text": e.text}, start_time + e.at))
        yield offset, batch


def gen_host_stream(
    host: str,
    cadence: int,
    profile: Profile,
    duration: Optional[int] = None,
    count: Optional[int] = None,
    start_time: int = 0,
    seed: int = 0,
    anomalies: Sequence[Anomaly] = (),
) -> Iterator[Metric]:
    """
    Metrics of one host: every profile metric once per tick. The tick count is
    ``duration // cadence`` unless ``count`` is given.
    """
    if count is None:
        if duration is None:
            raise ValueError("give duration or count")
        count = duration // cadence
    for _, batch in host_ticks(host, cadence, profile, count, start_time, seed, anomalies):
        yield from batch

