"""
Canonical job metric schema.

Metric values arrive pre-computed over the wire; each measurement named here
carries its value in the ``value`` field, in the canonical unit.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

from ..errors import ConfigError


@dataclass(frozen=True)
class MetricDefinition:
    name: str
    unit: str
    description: str
    # accepted unit spellings -> factor to the canonical unit
    conversions: Dict[str, float]

    def to_canonical(self, value: float, unit: Optional[str]) -> float:
        if unit is None or unit == self.unit:
            return value
        try:
            return value * self.conversions[unit]
        except KeyError:
            known = ", ".join([self.unit] + sorted(self.conversions))
            raise ConfigError(f"{self.name}: unknown unit '{unit}' (known: {known})") from None


_RATE_MBYTE = {"KByte/s": 1e-3, "GByte/s": 1e3, "MB/s": 1.0, "GB/s": 1e3}

SCHEMA: Dict[str, MetricDefinition] = {
    "cpu_load": MetricDefinition(
        "cpu_load", "cores", "Busy cores (run-queue load)", {}),
    "ipc": MetricDefinition(
        "ipc", "instr/cycle", "Instructions per cycle", {"IPC": 1.0}),
    "flops_dp": MetricDefinition(
        "flops_dp", "MFlop/s", "Double precision floating-point rate",
        {"kFlop/s": 1e-3, "GFlop/s": 1e3}),
    "mem_allocated": MetricDefinition(
        "mem_allocated", "bytes", "Allocated memory",
        {"KB": 1e3, "MB": 1e6, "GB": 1e9, "KiB": 1024.0, "MiB": 1024.0 ** 2, "GiB": 1024.0 ** 3}),
    "mem_bw": MetricDefinition(
        "mem_bw", "MByte/s", "Main memory bandwidth", dict(_RATE_MBYTE)),
    "net_io": MetricDefinition(
        "net_io", "MByte/s", "Network traffic", dict(_RATE_MBYTE)),
    "file_io": MetricDefinition(
        "file_io", "MByte/s", "File system traffic", dict(_RATE_MBYTE)),
}

METRIC_NAMES: List[str] = list(SCHEMA)


def require_metric(name: str) -> MetricDefinition:
    """Look up a schema metric, rejecting unknown names at config load."""
    try:
        return SCHEMA[name]
    except KeyError:
        raise ConfigError(
            f"unknown metric '{name}', expected one of {', '.join(METRIC_NAMES)}"
        ) from None
