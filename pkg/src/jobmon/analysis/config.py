"""
Loading of analysis rules, hardware ceilings and the decision tree.

    ceilings:            # canonical units, used for <metric>_fraction statistics
      mem_bw: 60000
    rules:
      - id: flops_dp_break
        metric: flops_dp
        comparator: below
        threshold: 100
        unit: MFlop/s
        timeout: 600     # seconds
        critical: true
    tree:
      statistic: cpu_load_mean
      ...
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..config import ConfigSection, load_yaml
from ..errors import ConfigError
from .rules import COMPARATORS, ThresholdTimeoutRule
from .schema import METRIC_NAMES, require_metric
from .tree import DecisionTree, default_tree

NS_PER_SECOND = 1_000_000_000

DEFAULT_CEILINGS: Dict[str, float] = {"mem_bw": 60000.0, "flops_dp": 20000.0}


class RuleSection(ConfigSection):
    """One entry of the ``rules`` list."""

    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "id": {"type": "str", "default": None, "help": "Check name, one table row"},
            "metric": {"type": "choice", "default": None, "choices": METRIC_NAMES},
            "comparator": {"type": "choice", "default": "below", "choices": list(COMPARATORS)},
            "threshold": {"type": "float", "default": None},
            "unit": {"type": "str", "default": None, "optional": True,
                     "help": "Unit of threshold; canonical unit when omitted"},
            "timeout": {"type": "float", "default": 600.0, "min": 1e-9,
                        "help": "Seconds a violation must last"},
            "gap_tolerance": {"type": "float", "default": None, "optional": True, "min": 0.0,
                              "help": "Seconds; 3 median sampling intervals when omitted"},
            "critical": {"type": "bool", "default": False},
            "field": {"type": "str", "default": "value"},
            "description": {"type": "str", "default": ""},
        }

    def build(self, entry: Mapping[str, Any]) -> ThresholdTimeoutRule:
        params = self.validate_parameters(entry)
        definition = require_metric(params["metric"])
        gap = params["gap_tolerance"]
        return ThresholdTimeoutRule(
            rule_id=params["id"],
            metric=params["metric"],
            comparator=params["comparator"],
            threshold=definition.to_canonical(params["threshold"], params["unit"]),
            timeout=int(params["timeout"] * NS_PER_SECOND),
            gap_tolerance=int(gap * NS_PER_SECOND) if gap is not None else None,
            critical=params["critical"],
            field=params["field"],
            description=params["description"],
        )


DEFAULT_RULES: List[Dict[str, Any]] = [
    {"id": "cpu_idle", "metric": "cpu_load", "comparator": "below", "threshold": 0.5,
     "timeout": 600, "critical": True},
    {"id": "flops_dp_break", "metric": "flops_dp", "comparator": "below", "threshold": 100,
     "unit": "MFlop/s", "timeout": 600, "critical": True},
    {"id": "mem_bw_break", "metric": "mem_bw", "comparator": "below", "threshold": 500,
     "unit": "MByte/s", "timeout": 600, "critical": True},
    {"id": "ipc_low", "metric": "ipc", "comparator": "below", "threshold": 0.2, "timeout": 600},
    {"id": "mem_exhausted", "metric": "mem_allocated", "comparator": "above", "threshold": 120,
     "unit": "GB", "timeout": 300},
    {"id": "net_io_saturation", "metric": "net_io", "comparator": "above", "threshold": 10000,
     "timeout": 600},
    {"id": "file_io_heavy", "metric": "file_io", "comparator": "above", "threshold": 2000,
     "timeout": 600},
]


@dataclass
class AnalysisConfig:
    rules: List[ThresholdTimeoutRule]
    tree: DecisionTree
    ceilings: Dict[str, float] = field(default_factory=dict)

    def rule(self, rule_id: str) -> ThresholdTimeoutRule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AnalysisConfig":
        unknown = set(doc) - {"rules", "tree", "ceilings"}
        if unknown:
            raise ConfigError(f"unknown analysis key(s): {', '.join(sorted(unknown))}")

        entries = doc.get("rules", DEFAULT_RULES)
        if not isinstance(entries, list):
            raise ConfigError("rules must be a list")
        section = RuleSection()
        rules = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, Mapping):
                raise ConfigError(f"rules[{i}] must be a mapping")
            try:
                rules.append(section.build(entry))
            except ConfigError as e:
                raise ConfigError(f"rules[{i}]: {e}") from e
        ids = [r.rule_id for r in rules]
        if len(set(ids)) != len(ids):
            raise ConfigError("rule ids must be unique")

        tree_doc = doc.get("tree")
        tree = DecisionTree.from_dict(tree_doc) if tree_doc is not None else default_tree()
        return cls(rules, tree, _ceilings(doc.get("ceilings", DEFAULT_CEILINGS)))


def _ceilings(doc: Any) -> Dict[str, float]:
    if not isinstance(doc, Mapping):
        raise ConfigError("ceilings must be a mapping of metric to number")
    ceilings = {}
    for metric, value in doc.items():
        require_metric(metric)
        try:
            ceilings[metric] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"ceilings.{metric}: not a number") from None
        if ceilings[metric] <= 0:
            raise ConfigError(f"ceilings.{metric}: must be positive")
    return ceilings


def default_analysis_config() -> AnalysisConfig:
    return AnalysisConfig.from_dict({})


def load_analysis_config(path: Optional[Union[str, Path]] = None) -> AnalysisConfig:
    """Rules, tree and ceilings from ``path``; the built-in defaults when omitted."""
    if path is None:
        return default_analysis_config()
    return AnalysisConfig.from_dict(load_yaml(path))
