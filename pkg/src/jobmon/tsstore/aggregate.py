"""
Windowed downsampling of a series.
"""

from typing import Callable, Dict, List

import numpy as np

from ..errors import TypeMismatch
from .model import Point, Series, is_numeric, value_kind

AGGREGATES = ("min", "max", "mean", "sum", "count")


def _reduce(fn: str, values: np.ndarray, integral: bool):
    if fn == "mean":
        return float(values.mean())
    reducers: Dict[str, Callable[[np.ndarray], object]] = {
        "min": np.min,
        "max": np.max,
        "sum": np.sum,
    }
    result = reducers[fn](values)
    return int(result) if integral else float(result)


def aggregate_window(series: Series, fn: str, window: int) -> Series:
    """
    One point per non-empty window and field, stamped at the window start.

    Windows are aligned to ``floor(first_ts / window) * window``; ``count`` works on
    every value kind, the other functions on integers and floats only.

    Raises:
        ValueError: unknown function or non-positive window
        TypeMismatch: numeric function over string or boolean values
    """
    if fn not in AGGREGATES:
        raise ValueError(f"unknown aggregate '{fn}', expected one of {', '.join(AGGREGATES)}")
    if window <= 0:
        raise ValueError("window must be positive")

    out: List[Point] = []
    for field_name in series.fields():
        points = series.field_points(field_name)
        if fn != "count":
            bad = next((p for p in points if not is_numeric(p.value)), None)
            if bad is not None:
                raise TypeMismatch(
                    f"cannot compute {fn} over {value_kind(bad.value)} field '{field_name}'"
                )

        timestamps = np.fromiter((p.timestamp for p in points), dtype=np.int64, count=len(points))
        buckets = timestamps // window
        starts, first_index, counts = np.unique(buckets, return_index=True, return_counts=True)

        if fn == "count":
            for start, n in zip(starts, counts):
                out.append(Point(int(start) * window, field_name, int(n)))
            continue

        integral = all(isinstance(p.value, int) for p in points)
        dtype = np.int64 if integral else np.float64
        values = np.fromiter((p.value for p in points), dtype=dtype, count=len(points))
        for start, lo, n in zip(starts, first_index, counts):
            out.append(Point(int(start) * window, field_name, _reduce(fn, values[lo:lo + n], integral)))

    out.sort(key=lambda p: (p.timestamp, p.field))
    return Series(series.key, out)
