"""
Threshold/timeout rules for pathological-job detection.

A rule fires on a node when every sample of one contiguous stretch violates the
threshold and the stretch lasts at least the timeout. Samples further apart than
the gap tolerance break a stretch.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import ConfigError
from ..jobtags import HOSTNAME_TAG
from ..tsstore.model import Series
from .schema import require_metric

COMPARATORS = ("below", "above")
SEVERITIES = ("info", "warn", "fail")

# gap tolerance default: this many median sampling intervals
GAP_TOLERANCE_INTERVALS = 3


@dataclass(frozen=True)
class ThresholdTimeoutRule:
    """
    ``threshold`` is in the metric's canonical unit; ``timeout`` and
    ``gap_tolerance`` are nanoseconds. ``gap_tolerance`` None means three median
    sampling intervals of the evaluated series.
    """
    rule_id: str
    metric: str
    comparator: str
    threshold: float
    timeout: int
    gap_tolerance: Optional[int] = None
    critical: bool = False
    field: str = "value"
    description: str = ""

    def __post_init__(self):
        require_metric(self.metric)
        if self.comparator not in COMPARATORS:
            raise ConfigError(f"rule {self.rule_id}: comparator must be below or above")
        if self.timeout <= 0:
            raise ConfigError(f"rule {self.rule_id}: timeout must be positive")
        if self.gap_tolerance is not None and not 0 <= self.gap_tolerance < self.timeout:
            raise ConfigError(f"rule {self.rule_id}: gap_tolerance must be below the timeout")

    @property
    def severity(self) -> str:
        return "fail" if self.critical else "warn"

    def violations(self, values: np.ndarray) -> np.ndarray:
        if self.comparator == "below":
            return values < self.threshold
        return values > self.threshold


@dataclass(frozen=True)
class Finding:
    rule_id: str
    job_id: str
    hostname: str
    t_start: int
    t_end: int
    severity: str
    evidence: Dict[str, float] = field(default_factory=dict)

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    def to_dict(self) -> Dict[str, object]:
        return {
            "rule": self.rule_id,
            "jobid": self.job_id,
            "hostname": self.hostname,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "severity": self.severity,
            "evidence": dict(self.evidence),
        }


def default_gap_tolerance(timestamps: np.ndarray) -> int:
    if len(timestamps) < 2:
        return 0
    return int(GAP_TOLERANCE_INTERVALS * np.median(np.diff(timestamps)))


def eval_threshold_timeout(
    rule: ThresholdTimeoutRule,
    series: Series,
    job_id: str = "",
    hostname: Optional[str] = None,
) -> List[Finding]:
    """
    One Finding per maximal violating stretch lasting at least ``rule.timeout``.
    A stretch lasts from its first to its last violating sample, so one exactly
    as long as the timeout already fires.

    Raises:
        TypeMismatch: the rule's field holds non-numeric values
    """
    timestamps, values = series.numeric_arrays(rule.field)
    if hostname is None:
        hostname = series.key.tag_dict.get(HOSTNAME_TAG, "")
    if len(timestamps) == 0:
        return []

    tolerance = rule.gap_tolerance
    if tolerance is None:
        tolerance = default_gap_tolerance(timestamps)
    violating = rule.violations(values)

    findings = []
    n = len(timestamps)
    i = 0
    while i < n:
        if not violating[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and violating[j + 1] and timestamps[j + 1] - timestamps[j] <= tolerance:
            j += 1
        if timestamps[j] - timestamps[i] >= rule.timeout:
            stretch = values[i:j + 1]
            findings.append(Finding(
                rule_id=rule.rule_id,
                job_id=job_id,
                hostname=hostname,
                t_start=int(timestamps[i]),
                t_end=int(timestamps[j]),
                severity=rule.severity,
                evidence={
                    "mean": float(stretch.mean()),
                    "min": float(stretch.min()),
                    "max": float(stretch.max()),
                    "samples": float(len(stretch)),
                    "threshold": float(rule.threshold),
                },
            ))
        i = j + 1
    return findings
