"""Rule-based job evaluation and performance-pattern classification."""

from .config import AnalysisConfig, RuleSection, default_analysis_config, load_analysis_config
from .evaluate import (
    STATUS_ORDER,
    Cell,
    EvaluationRow,
    EvaluationTable,
    compute_job_stats,
    evaluate_job,
    evaluate_jobs,
    imbalance_ratio,
    required_metrics,
)
from .rules import Finding, ThresholdTimeoutRule, eval_threshold_timeout
from .schema import METRIC_NAMES, SCHEMA, MetricDefinition
from .tree import NO_FINDING, DecisionTree, Leaf, Node, classify_pattern, default_tree

__all__ = [
    "AnalysisConfig",
    "Cell",
    "DecisionTree",
    "EvaluationRow",
    "EvaluationTable",
    "Finding",
    "Leaf",
    "METRIC_NAMES",
    "MetricDefinition",
    "NO_FINDING",
    "Node",
    "RuleSection",
    "SCHEMA",
    "STATUS_ORDER",
    "ThresholdTimeoutRule",
    "classify_pattern",
    "compute_job_stats",
    "default_analysis_config",
    "default_tree",
    "eval_threshold_timeout",
    "evaluate_job",
    "evaluate_jobs",
    "imbalance_ratio",
    "load_analysis_config",
    "required_metrics",
]
