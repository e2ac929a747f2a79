"""
Line-protocol parser and canonical serializer.

One line is ``measurement[,tag=value...] field=value[,field=value...] [timestamp]``.
The measurement escapes ``,`` and space; tag keys, tag values and field keys
escape ``,``, ``=`` and space. String field values are double quoted with ``\\"``
and ``\\\\`` escapes. Integers carry a trailing ``i``. Timestamps are signed 64-bit
nanoseconds since the Unix epoch.

Within keys and tag values a backslash that precedes a character it could escape
(or ends the token) is written doubled, so every string survives a round trip.
"""

import math
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .errors import InvalidMetric, MalformedLine

FieldValue = Union[float, int, bool, str]

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1

TRUE_TOKENS = frozenset(("t", "T", "true", "True"))
FALSE_TOKENS = frozenset(("f", "F", "false", "False"))

MEASUREMENT_SPECIALS = ", "
KEY_SPECIALS = ",= "

PRECISION_FACTORS = {
    "ns": 1,
    "n": 1,
    "u": 1_000,
    "us": 1_000,
    "ms": 1_000_000,
    "s": 1_000_000_000,
    "m": 60 * 1_000_000_000,
    "h": 3600 * 1_000_000_000,
}

_INT_RE = re.compile(r"-?[0-9]+\Z")
_FLOAT_RE = re.compile(r"-?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z")


def _typed(fields: Dict[str, FieldValue]) -> Dict[str, Tuple[type, FieldValue]]:
    return {k: (type(v), v) for k, v in fields.items()}


@dataclass(eq=False)
class Metric:
    """
    One measurement point.

    ``timestamp`` is None while the point is unstamped; the router stamps it
    with the receipt time.
    """
    measurement: str
    tags: Dict[str, str] = field(default_factory=dict)
    fields: Dict[str, FieldValue] = field(default_factory=dict)
    timestamp: Optional[int] = None

    @property
    def is_stamped(self) -> bool:
        return self.timestamp is not None

    def stamped(self, timestamp: int) -> "Metric":
        """Return this metric with ``timestamp`` if it has none yet."""
        if self.timestamp is not None:
            return self
        return replace(self, timestamp=timestamp)

    def with_tags(self, tags: Dict[str, str]) -> "Metric":
        return Metric(self.measurement, tags, self.fields, self.timestamp)

    def __eq__(self, other: object) -> bool:
        # value kinds matter: 1i, 1.0 and true are different fields
        if not isinstance(other, Metric):
            return NotImplemented
        return (
            self.measurement == other.measurement
            and self.timestamp == other.timestamp
            and self.tags == other.tags
            and _typed(self.fields) == _typed(other.fields)
        )

    __hash__ = None  # type: ignore[assignment]


# Parsing


def _scan(line: str, pos: int, stops: str, escapable: str) -> Tuple[str, int]:
    """Read an escaped token from ``pos`` up to the first unescaped stop character."""
    n = len(line)
    out: List[str] = []
    while pos < n:
        c = line[pos]
        if c == "\\":
            if pos + 1 >= n:
                raise MalformedLine("dangling escape at end of line", line)
            nxt = line[pos + 1]
            if nxt in escapable or nxt == "\\":
                out.append(nxt)
                pos += 2
                continue
            out.append(c)
            pos += 1
            continue
        if c in stops:
            break
        out.append(c)
        pos += 1
    return "".join(out), pos


def _parse_value(token: str, line: str) -> FieldValue:
    if not token:
        raise MalformedLine("empty field value", line)
    if token[-1] == "i":
        digits = token[:-1]
        if not _INT_RE.match(digits):
            raise MalformedLine(f"invalid integer value '{token}'", line)
        value = int(digits)
        if not INT64_MIN <= value <= INT64_MAX:
            raise MalformedLine(f"integer value out of range '{token}'", line)
        return value
    if token in TRUE_TOKENS:
        return True
    if token in FALSE_TOKENS:
        return False
    if not _FLOAT_RE.match(token):
        raise MalformedLine(f"invalid field value '{token}'", line)
    value_f = float(token)
    if not math.isfinite(value_f):
        raise MalformedLine(f"non-finite float value '{token}'", line)
    return value_f


def _parse_timestamp(token: str, line: str) -> int:
    if not _INT_RE.match(token):
        raise MalformedLine(f"invalid timestamp '{token}'", line)
    value = int(token)
    if not INT64_MIN <= value <= INT64_MAX:
        raise MalformedLine(f"timestamp out of range '{token}'", line)
    return value


def _parse_simple(line: str) -> Metric:
    """Fast path for lines without backslashes or quoted strings."""
    parts = line.split(" ")
    if len(parts) not in (2, 3):
        raise MalformedLine("expected measurement, field set and optional timestamp", line)

    head = parts[0].split(",")
    measurement = head[0]
    if not measurement:
        raise MalformedLine("empty measurement", line)

    tags: Dict[str, str] = {}
    for item in head[1:]:
        key, sep, value = item.partition("=")
        if not sep or not key or not value or "=" in value:
            raise MalformedLine(f"invalid tag '{item}'", line)
        if key in tags:
            raise MalformedLine(f"duplicate tag key '{key}'", line)
        tags[key] = value

    fields: Dict[str, FieldValue] = {}
    for item in parts[1].split(","):
        key, sep, value = item.partition("=")
        if not key or not sep:
            raise MalformedLine(f"invalid field '{item}'", line)
        if key in fields:
            raise MalformedLine(f"duplicate field key '{key}'", line)
        fields[key] = _parse_value(value, line)

    timestamp = _parse_timestamp(parts[2], line) if len(parts) == 3 else None
    return Metric(measurement, tags, fields, timestamp)


def _parse_escaped(line: str) -> Metric:
    n = len(line)
    measurement, pos = _scan(line, 0, MEASUREMENT_SPECIALS, MEASUREMENT_SPECIALS)
    if not measurement:
        raise MalformedLine("empty measurement", line)

    tags: Dict[str, str] = {}
    while pos < n and line[pos] == ",":
        key, pos = _scan(line, pos + 1, KEY_SPECIALS, KEY_SPECIALS)
        if not key or pos >= n or line[pos] != "=":
            raise MalformedLine("invalid tag key", line)
        value, pos = _scan(line, pos + 1, KEY_SPECIALS, KEY_SPECIALS)
        if not value or (pos < n and line[pos] == "="):
            raise MalformedLine(f"invalid value for tag '{key}'", line)
        if key in tags:
            raise MalformedLine(f"duplicate tag key '{key}'", line)
        tags[key] = value

    if pos >= n or line[pos] != " ":
        raise MalformedLine("missing field set", line)
    pos += 1

    fields: Dict[str, FieldValue] = {}
    while True:
        key, pos = _scan(line, pos, KEY_SPECIALS, KEY_SPECIALS)
        if not key or pos >= n or line[pos] != "=":
            raise MalformedLine("invalid field key", line)
        pos += 1
        if key in fields:
            raise MalformedLine(f"duplicate field key '{key}'", line)

        if pos < n and line[pos] == '"':
            pos += 1
            chars: List[str] = []
            while pos < n:
                c = line[pos]
                if c == "\\" and pos + 1 < n and line[pos + 1] in '"\\':
                    chars.append(line[pos + 1])
                    pos += 2
                elif c == '"':
                    break
                else:
                    chars.append(c)
                    pos += 1
            if pos >= n:
                raise MalformedLine(f"unterminated string for field '{key}'", line)
            pos += 1
            fields[key] = "".join(chars)
        else:
            end = pos
            while end < n and line[end] not in ", ":
                end += 1
            fields[key] = _parse_value(line[pos:end], line)
            pos = end

        if pos < n and line[pos] == ",":
            pos += 1
            continue
        break

    timestamp = None
    if pos < n:
        if line[pos] != " ":
            raise MalformedLine("unexpected character after field set", line)
        timestamp = _parse_timestamp(line[pos + 1:], line)
    return Metric(measurement, tags, fields, timestamp)


def parse_line(line: str) -> Metric:
    """
    Parse one wire-format line (no trailing newline).

    Raises:
        MalformedLine: the line is rejected as a whole
    """
    if not line or line.isspace():
        raise MalformedLine("empty line", line)
    if line[0] == "#":
        raise MalformedLine("comment line", line)
    if "\n" in line or "\r" in line:
        raise MalformedLine("line break inside line", line)

    if "\\" not in line and '"' not in line:
        return _parse_simple(line)
    return _parse_escaped(line)


def parse_batch(
    body: str, precision: str = "ns"
) -> Tuple[List[Metric], List[Tuple[int, MalformedLine]]]:
    """
    Parse a newline-separated batch.

    Blank lines and ``#`` comments are skipped. Line indices in the error list are
    zero-based positions in ``body``. Timestamps are scaled from ``precision`` units
    to nanoseconds.
    """
    factor = PRECISION_FACTORS.get(precision)
    if factor is None:
        raise MalformedLine(f"unknown precision '{precision}'")
    metrics: List[Metric] = []
    errors: List[Tuple[int, MalformedLine]] = []
    if not body:
        return metrics, errors

    for index, line in enumerate(body.split("\n")):
        if line.endswith("\r"):
            line = line[:-1]
        if not line or line.isspace() or line[0] == "#":
            continue
        try:
            metric = parse_line(line)
            if factor != 1 and metric.timestamp is not None:
                metric.timestamp = to_nanoseconds(metric.timestamp, precision)
            metrics.append(metric)
        except MalformedLine as e:
            errors.append((index, e))
    return metrics, errors


def to_nanoseconds(timestamp: int, precision: str) -> int:
    """Scale a timestamp given in ``precision`` units to nanoseconds."""
    try:
        factor = PRECISION_FACTORS[precision]
    except KeyError:
        raise MalformedLine(f"unknown precision '{precision}'") from None
    value = timestamp * factor
    if not INT64_MIN <= value <= INT64_MAX:
        raise MalformedLine(f"timestamp out of range at precision '{precision}'")
    return value


# Serialization


def _escape(text: str, specials: str) -> str:
    if "\\" not in text and not any(c in text for c in specials):
        return text
    out: List[str] = []
    last = len(text) - 1
    for i, c in enumerate(text):
        if c in specials:
            out.append("\\" + c)
        elif c == "\\":
            nxt = text[i + 1] if i < last else None
            out.append("\\\\" if nxt is None or nxt in specials or nxt == "\\" else "\\")
        else:
            out.append(c)
    return "".join(out)


def _format_value(value: FieldValue) -> str:
    # bool before int: bool is an int subclass
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return f"{value}i"
    if isinstance(value, float):
        text = repr(value)
        return text[:-2] if text.endswith(".0") else text
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _sorted_keys(mapping: Dict[str, object]) -> List[str]:
    return sorted(mapping, key=lambda k: k.encode("utf-8"))


def _check_text(text: object, what: str, allow_empty: bool = False) -> None:
    if not isinstance(text, str):
        raise InvalidMetric(f"{what} must be text, got {type(text).__name__}")
    if not text and not allow_empty:
        raise InvalidMetric(f"{what} is empty")
    if "\n" in text or "\r" in text:
        raise InvalidMetric(f"{what} contains a line break")


def validate_metric(metric: Metric) -> None:
    """Raise InvalidMetric unless ``metric`` can be written to the wire."""
    _check_text(metric.measurement, "measurement")
    if metric.measurement.startswith("#"):
        raise InvalidMetric("measurement must not start with '#'")
    for key, value in metric.tags.items():
        _check_text(key, "tag key")
        _check_text(value, f"tag '{key}' value")
    if not metric.fields:
        raise InvalidMetric("field set is empty")
    for key, value in metric.fields.items():
        _check_text(key, "field key")
        if isinstance(value, bool):
            continue
        if isinstance(value, int):
            if not INT64_MIN <= value <= INT64_MAX:
                raise InvalidMetric(f"field '{key}' integer out of range")
        elif isinstance(value, float):
            if not math.isfinite(value):
                raise InvalidMetric(f"field '{key}' is not finite")
        elif isinstance(value, str):
            _check_text(value, f"field '{key}' value", allow_empty=True)
        else:
            raise InvalidMetric(f"field '{key}' has unsupported type {type(value).__name__}")
    if metric.timestamp is not None:
        if isinstance(metric.timestamp, bool) or not isinstance(metric.timestamp, int):
            raise InvalidMetric("timestamp must be an integer")
        if not INT64_MIN <= metric.timestamp <= INT64_MAX:
            raise InvalidMetric("timestamp out of range")


def serialize(metric: Metric) -> str:
    """Render the canonical line for ``metric``: sorted keys, minimal escaping."""
    validate_metric(metric)

    parts = [_escape(metric.measurement, MEASUREMENT_SPECIALS)]
    for key in _sorted_keys(metric.tags):
        parts.append(f",{_escape(key, KEY_SPECIALS)}={_escape(metric.tags[key], KEY_SPECIALS)}")
    head = "".join(parts)

    fields = ",".join(
        f"{_escape(key, KEY_SPECIALS)}={_format_value(metric.fields[key])}"
        for key in _sorted_keys(metric.fields)
    )
    if metric.timestamp is None:
        return f"{head} {fields}"
    return f"{head} {fields} {metric.timestamp}"


def serialize_batch(metrics: Iterable[Metric]) -> str:
    return "\n".join(serialize(m) for m in metrics)
