"""
Decision tree for performance-pattern classification.

Internal nodes compare one job-level statistic against a constant; leaves carry a
pattern label. Trees are loaded from nested mappings:

    {statistic: cpu_load_mean, comparator: "<", constant: 0.5,
     if_true: {label: idle/waiting}, if_false: {...}}
"""

import operator
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Set, Union

from ..errors import ConfigError, MissingStatistic

NO_FINDING = "no finding"

PREDICATES: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

MAX_DEPTH = 64


@dataclass(frozen=True)
class Leaf:
    label: str


@dataclass(frozen=True)
class Node:
    statistic: str
    comparator: str
    constant: float
    if_true: "TreeItem"
    if_false: "TreeItem"

    def test(self, stats: Mapping[str, float]) -> bool:
        return PREDICATES[self.comparator](stats[self.statistic], self.constant)


TreeItem = Union[Node, Leaf]


class DecisionTree:
    def __init__(self, root: TreeItem):
        self.root = root

    def nodes(self) -> List[Node]:
        found: List[Node] = []
        stack: List[TreeItem] = [self.root]
        while stack:
            item = stack.pop()
            if isinstance(item, Node):
                found.append(item)
                stack.extend((item.if_false, item.if_true))
        return found

    def statistics(self) -> Set[str]:
        return {node.statistic for node in self.nodes()}

    def labels(self) -> Set[str]:
        labels: Set[str] = set()
        stack: List[TreeItem] = [self.root]
        while stack:
            item = stack.pop()
            if isinstance(item, Leaf):
                labels.add(item.label)
            else:
                stack.extend((item.if_true, item.if_false))
        return labels

    def path(self, stats: Mapping[str, float]) -> List[str]:
        """Statistics tested on the way to the leaf for ``stats``."""
        tested = []
        item = self.root
        while isinstance(item, Node):
            tested.append(item.statistic)
            item = item.if_true if item.test(stats) else item.if_false
        return tested

    def classify(self, stats: Mapping[str, float]) -> str:
        missing = self.statistics() - set(stats)
        if missing:
            raise MissingStatistic(f"missing statistic(s): {', '.join(sorted(missing))}")
        item = self.root
        while isinstance(item, Node):
            item = item.if_true if item.test(stats) else item.if_false
        return item.label

    # Serialization

    @classmethod
    def from_dict(cls, doc: Any) -> "DecisionTree":
        """
        Build a tree from nested mappings.

        Raises:
            ConfigError: on a malformed node, a missing child or a cycle
        """
        return cls(_parse_item(doc, set(), 0, "tree"))

    def to_dict(self) -> Dict[str, Any]:
        return _item_to_dict(self.root)


def _parse_item(doc: Any, seen: Set[int], depth: int, where: str) -> TreeItem:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(doc).__name__}")
    if id(doc) in seen:
        # YAML aliases can make a node its own descendant
        raise ConfigError(f"{where}: tree contains a cycle")
    if depth > MAX_DEPTH:
        raise ConfigError(f"{where}: tree deeper than {MAX_DEPTH}")

    if "label" in doc:
        extra = set(doc) - {"label"}
        if extra:
            raise ConfigError(f"{where}: leaf has extra keys {', '.join(sorted(extra))}")
        label = doc["label"]
        if not isinstance(label, str) or not label:
            raise ConfigError(f"{where}: leaf label must be non-empty text")
        return Leaf(label)

    required = {"statistic", "comparator", "constant", "if_true", "if_false"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"{where}: node lacks {', '.join(sorted(missing))}")
    extra = set(doc) - required
    if extra:
        raise ConfigError(f"{where}: node has extra keys {', '.join(sorted(extra))}")
    if doc["comparator"] not in PREDICATES:
        raise ConfigError(f"{where}: comparator must be one of {', '.join(PREDICATES)}")
    try:
        constant = float(doc["constant"])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: constant must be a number") from None

    seen = seen | {id(doc)}
    statistic = str(doc["statistic"])
    return Node(
        statistic=statistic,
        comparator=doc["comparator"],
        constant=constant,
        if_true=_parse_item(doc["if_true"], seen, depth + 1, f"{where}.if_true"),
        if_false=_parse_item(doc["if_false"], seen, depth + 1, f"{where}.if_false"),
    )


def _item_to_dict(item: TreeItem) -> Dict[str, Any]:
    if isinstance(item, Leaf):
        return {"label": item.label}
    return {
        "statistic": item.statistic,
        "comparator": item.comparator,
        "constant": item.constant,
        "if_true": _item_to_dict(item.if_true),
        "if_false": _item_to_dict(item.if_false),
    }


def default_tree(
    idle_load: float = 0.5,
    idle_flops: float = 100.0,
    bandwidth_fraction: float = 0.7,
    flops_fraction: float = 0.1,
    imbalance_ratio: float = 1.5,
) -> DecisionTree:
    """
    Idle / memory-bound / load-imbalance / no-finding tree. The constants are
    placeholders for site-specific tuning, not measured limits.
    """
    return DecisionTree(Node(
        "cpu_load_mean", "<", idle_load,
        if_true=Node("flops_dp_mean", "<", idle_flops, Leaf("idle/waiting"), Leaf(NO_FINDING)),
        if_false=Node(
            "mem_bw_fraction", ">=", bandwidth_fraction,
            if_true=Node(
                "flops_dp_fraction", "<", flops_fraction,
                Leaf("memory bandwidth bound"), Leaf(NO_FINDING),
            ),
            if_false=Node(
                "cpu_load_imbalance", ">=", imbalance_ratio,
                Leaf("load imbalance"), Leaf(NO_FINDING),
            ),
        ),
    ))


def classify_pattern(stats: Mapping[str, float], tree: Optional[DecisionTree] = None) -> str:
    """
    Label of the leaf ``stats`` reaches in ``tree`` (the default tree when omitted).

    Raises:
        MissingStatistic: a statistic named by any node is absent
    """
    return (tree or default_tree()).classify(stats)
