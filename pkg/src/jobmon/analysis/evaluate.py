"""
Per-node job evaluation tables and job-level statistics.

Evaluation is read-only over the store and covers [job start, job end] or, for a
running job, [job start, evaluation time].
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import NoData, UnknownDatabase
from ..jobtags import HOSTNAME_TAG, JOBID_TAG, JobRecord
from ..logs import get_logger
from ..tsstore.model import Series, SeriesKey, merge_series
from .rules import Finding, ThresholdTimeoutRule, eval_threshold_timeout
from .schema import METRIC_NAMES, SCHEMA
from .tree import NO_FINDING, DecisionTree

logger = get_logger(__name__)

STATUS_ORDER = {"pass": 0, "nodata": 1, "warn": 2, "fail": 3}
PATTERN_CHECK = "pattern"
STAT_SUFFIXES = ("_mean", "_max", "_imbalance", "_fraction")


@dataclass(frozen=True)
class Cell:
    status: str
    value: Optional[float] = None
    findings: int = 0
    label: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"status": self.status, "value": self.value}
        if self.findings:
            doc["findings"] = self.findings
        if self.label is not None:
            doc["label"] = self.label
        return doc

    def text(self) -> str:
        if self.label is not None:
            return self.label
        if self.value is None:
            return self.status.upper()
        return f"{self.status.upper()} {self.value:.4g}"


@dataclass
class EvaluationRow:
    check: str
    metric: Optional[str]
    unit: str
    cells: Dict[str, Cell]

    @property
    def worst(self) -> str:
        return max((c.status for c in self.cells.values()), key=STATUS_ORDER.__getitem__,
                   default="pass")


@dataclass
class EvaluationTable:
    """One row per check, one column per job node."""
    job_id: str
    user: str
    hosts: List[str]
    t_start: int
    t_end: Optional[int]
    evaluated_at: int
    rows: List[EvaluationRow] = field(default_factory=list)
    pattern: Optional[str] = None
    findings: List[Finding] = field(default_factory=list)

    def row(self, check: str) -> EvaluationRow:
        for row in self.rows:
            if row.check == check:
                return row
        raise KeyError(check)

    def status(self, check: str, host: str) -> str:
        return self.row(check).cells[host].status

    def worst_status(self) -> str:
        return max((row.worst for row in self.rows), key=STATUS_ORDER.__getitem__,
                   default="pass")

    def to_dict(self) -> Dict[str, Any]:
        """Structured document consumed by the dashboard generator."""
        return {
            "jobid": self.job_id,
            "user": self.user,
            "hosts": list(self.hosts),
            "t_start": self.t_start,
            "t_end": self.t_end,
            "running": self.t_end is None,
            "evaluated_at": self.evaluated_at,
            "pattern": self.pattern,
            "worst": self.worst_status(),
            "rows": [
                {
                    "check": row.check,
                    "metric": row.metric,
                    "unit": row.unit,
                    "cells": {host: row.cells[host].to_dict() for host in self.hosts},
                }
                for row in self.rows
            ],
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_text(self) -> str:
        """Aligned plain-text table."""
        state = "running" if self.t_end is None else "ended"
        header = ["check", "unit"] + list(self.hosts)
        lines = [[row.check, row.unit] + [row.cells[h].text() for h in self.hosts]
                 for row in self.rows]
        widths = [max(len(r[i]) for r in [header] + lines) for i in range(len(header))]

        def fmt(cols: List[str]) -> str:
            return "  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()

        out = [f"job {self.job_id}  user {self.user}  {state}  worst {self.worst_status()}"]
        out.append(fmt(header))
        out.append(fmt(["-" * w for w in widths]))
        out.extend(fmt(cols) for cols in lines)
        if self.pattern is not None:
            out.append(f"pattern: {self.pattern}")
        return "\n".join(out) + "\n"


def job_window(job: JobRecord, now: Optional[int] = None) -> Tuple[int, int]:
    """Half-open query window covering the job; ``now`` ends it while running."""
    if job.end_time is not None:
        return job.start_time, job.end_time + 1
    now = time.time_ns() if now is None else now
    return job.start_time, max(now, job.start_time) + 1


def host_series(store, db: str, metric: str, job: JobRecord, host: str,
                t0: int, t1: int) -> Series:
    """The job's samples of ``metric`` on ``host``, as one series."""
    tags = {JOBID_TAG: job.job_id, HOSTNAME_TAG: host}
    key = SeriesKey.of(db, metric, tags)
    try:
        found = store.query_range(db, metric, tags, t0, t1)
    except UnknownDatabase:
        found = []
    return merge_series(found, key)


def required_metrics(tree: DecisionTree) -> List[str]:
    """Schema metrics the tree's statistics are computed from."""
    metrics = set()
    for statistic in tree.statistics():
        for suffix in STAT_SUFFIXES:
            if statistic.endswith(suffix) and statistic[: -len(suffix)] in SCHEMA:
                metrics.add(statistic[: -len(suffix)])
    return sorted(metrics)


def imbalance_ratio(node_means: Sequence[float]) -> float:
    """max / min node mean; 1.0 when all nodes are zero, inf when only the minimum is."""
    high, low = max(node_means), min(node_means)
    if low == 0:
        return 1.0 if high == 0 else float("inf")
    return high / low


def compute_job_stats(
    job: JobRecord,
    store,
    db: str = "jobs",
    metrics: Optional[Iterable[str]] = None,
    required: Iterable[str] = (),
    ceilings: Optional[Mapping[str, float]] = None,
    now: Optional[int] = None,
) -> Dict[str, float]:
    """
    ``<metric>_mean`` and ``<metric>_max`` over all job nodes, ``<metric>_imbalance``
    across node means, and ``<metric>_fraction`` of the mean against the metric's
    configured ceiling. Metrics without samples are left out.

    Raises:
        NoData: a metric in ``required`` has no samples
    """
    t0, t1 = job_window(job, now)
    ceilings = ceilings or {}
    required = set(required)
    names = list(metrics) if metrics is not None else list(METRIC_NAMES)
    names += sorted(required - set(names))

    stats: Dict[str, float] = {}
    for metric in names:
        per_node = []
        for host in job.sorted_hosts():
            _, values = host_series(store, db, metric, job, host, t0, t1).numeric_arrays()
            if len(values):
                per_node.append(values)
        if not per_node:
            if metric in required:
                raise NoData(f"job {job.job_id}: no samples of {metric}")
            continue
        samples = np.concatenate(per_node)
        mean = float(samples.mean())
        stats[f"{metric}_mean"] = mean
        stats[f"{metric}_max"] = float(samples.max())
        stats[f"{metric}_imbalance"] = imbalance_ratio([float(v.mean()) for v in per_node])
        ceiling = ceilings.get(metric)
        if ceiling:
            stats[f"{metric}_fraction"] = mean / ceiling
    return stats


def _rule_row(rule: ThresholdTimeoutRule, job: JobRecord, store, db: str,
              t0: int, t1: int, findings: List[Finding]) -> EvaluationRow:
    cells: Dict[str, Cell] = {}
    for host in job.sorted_hosts():
        series = host_series(store, db, rule.metric, job, host, t0, t1)
        _, values = series.numeric_arrays(rule.field)
        if not len(values):
            cells[host] = Cell("nodata")
            continue
        found = eval_threshold_timeout(rule, series, job_id=job.job_id, hostname=host)
        findings.extend(found)
        status = rule.severity if found else "pass"
        cells[host] = Cell(status, float(values.mean()), findings=len(found))
    return EvaluationRow(rule.rule_id, rule.metric, SCHEMA[rule.metric].unit, cells)


def _pattern_row(job: JobRecord, store, db: str, tree: DecisionTree,
                 ceilings: Optional[Mapping[str, float]], now: int
                 ) -> Tuple[EvaluationRow, Optional[str]]:
    hosts = job.sorted_hosts()
    needed = required_metrics(tree)
    try:
        stats = compute_job_stats(job, store, db, metrics=needed, required=needed,
                                  ceilings=ceilings, now=now)
    except NoData:
        return EvaluationRow(PATTERN_CHECK, None, "", {h: Cell("nodata") for h in hosts}), None
    label = tree.classify(stats)
    status = "pass" if label == NO_FINDING else "warn"
    cells = {h: Cell(status, label=label) for h in hosts}
    return EvaluationRow(PATTERN_CHECK, None, "", cells), label


def evaluate_job(
    job: JobRecord,
    rules: Sequence[ThresholdTimeoutRule],
    store,
    db: str = "jobs",
    tree: Optional[DecisionTree] = None,
    ceilings: Optional[Mapping[str, float]] = None,
    now: Optional[int] = None,
) -> EvaluationTable:
    """
    Evaluate every rule on every job node, plus the pattern row when a tree is
    given. Cells without samples get status ``nodata``.

    Raises:
        MissingStatistic: the tree tests a statistic the job statistics never provide
    """
    evaluated_at = time.time_ns() if now is None else now
    t0, t1 = job_window(job, evaluated_at)
    table = EvaluationTable(
        job_id=job.job_id,
        user=job.user,
        hosts=job.sorted_hosts(),
        t_start=job.start_time,
        t_end=job.end_time,
        evaluated_at=evaluated_at,
    )
    for rule in rules:
        table.rows.append(_rule_row(rule, job, store, db, t0, t1, table.findings))
    if tree is not None:
        row, table.pattern = _pattern_row(job, store, db, tree, ceilings, evaluated_at)
        table.rows.append(row)

    logger.debug("job_evaluated", jobid=job.job_id, worst=table.worst_status(),
                 findings=len(table.findings), pattern=table.pattern)
    return table


def evaluate_jobs(
    jobs: Sequence[JobRecord],
    rules: Sequence[ThresholdTimeoutRule],
    store,
    db: str = "jobs",
    tree: Optional[DecisionTree] = None,
    ceilings: Optional[Mapping[str, float]] = None,
    now: Optional[int] = None,
    max_workers: int = 4,
) -> List[EvaluationTable]:
    """Evaluate distinct jobs concurrently; results keep the order of ``jobs``."""
    with ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="jobmon-eval") as pool:
        return list(pool.map(
            lambda job: evaluate_job(job, rules, store, db, tree, ceilings, now), jobs
        ))
