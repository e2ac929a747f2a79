"""
Series identity and point containers shared by the store, analysis and dashgen.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Tuple

import numpy as np

from ..errors import TypeMismatch
from ..lineproto import FieldValue


def is_numeric(value: FieldValue) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def value_kind(value: FieldValue) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "str"


@dataclass(frozen=True)
class SeriesKey:
    """(database, measurement, tag set); tags kept as a sorted tuple of pairs."""
    database: str
    measurement: str
    tags: Tuple[Tuple[str, str], ...] = ()

    @classmethod
    def of(cls, database: str, measurement: str, tags: Mapping[str, str]) -> "SeriesKey":
        return cls(database, measurement, tuple(sorted(tags.items())))

    @property
    def tag_dict(self) -> Dict[str, str]:
        return dict(self.tags)

    def matches(self, tag_filter: Mapping[str, str]) -> bool:
        tags = self.tag_dict
        return all(tags.get(k) == v for k, v in tag_filter.items())


class Point(NamedTuple):
    timestamp: int
    field: str
    value: FieldValue


@dataclass
class Series:
    """Time-ordered points of one series; ties on timestamp ordered by field name."""
    key: SeriesKey
    points: List[Point] = field(default_factory=list)

    def fields(self) -> List[str]:
        return sorted({p.field for p in self.points})

    def field_points(self, field_name: str) -> List[Point]:
        return [p for p in self.points if p.field == field_name]

    def numeric_arrays(self, field_name: str = "value") -> Tuple[np.ndarray, np.ndarray]:
        """
        Timestamps and values of one numeric field as numpy arrays.

        Raises:
            TypeMismatch: the field holds strings or booleans
        """
        points = self.field_points(field_name)
        for p in points:
            if not is_numeric(p.value):
                raise TypeMismatch(
                    f"{self.key.measurement}.{field_name} holds {value_kind(p.value)} values"
                )
        timestamps = np.fromiter((p.timestamp for p in points), dtype=np.int64, count=len(points))
        values = np.fromiter((p.value for p in points), dtype=np.float64, count=len(points))
        return timestamps, values


def merge_series(series: List[Series], key: SeriesKey) -> Series:
    """Merge several series (e.g. one host's series split by extra tags) into one."""
    points = sorted(
        (p for s in series for p in s.points), key=lambda p: (p.timestamp, p.field)
    )
    return Series(key, points)
