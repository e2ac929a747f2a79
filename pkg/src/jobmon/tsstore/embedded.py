"""
Embedded time-series store.

Points live in an in-memory index keyed by series. When a directory is given,
every acknowledged batch is first appended to the database's segment file as one
length-prefixed record of canonical line protocol, and the index is rebuilt from
those records on startup. ``MANIFEST`` lists the databases, one per line.
"""

import bisect
import os
import re
import struct
import threading
import time
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Set, Tuple, Union

from ..errors import IOFailure, StorageFull, UnknownDatabase
from ..lineproto import FieldValue, Metric, parse_batch, serialize_batch, validate_metric
from ..logs import get_logger
from .base import StorageBackend
from .model import Point, Series, SeriesKey, value_kind

logger = get_logger(__name__)

HEADER = struct.Struct(">I")
MANIFEST_NAME = "MANIFEST"
SEGMENT_SUFFIX = ".seg"

_DB_NAME_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.-]*\Z")


def valid_db_name(name: str) -> bool:
    return bool(name) and bool(_DB_NAME_RE.match(name))


class _SeriesData:
    """Points of one series, deduplicated on (timestamp, field)."""

    __slots__ = ("key", "points", "_sorted", "_timestamps")

    def __init__(self, key: SeriesKey):
        self.key = key
        self.points: Dict[Tuple[int, str], FieldValue] = {}
        self._sorted: Optional[List[Point]] = None
        self._timestamps: List[int] = []

    def put(self, timestamp: int, field: str, value: FieldValue) -> bool:
        """Store one value; returns True when it added a new point."""
        slot = (timestamp, field)
        is_new = slot not in self.points
        self.points[slot] = value
        self._sorted = None
        return is_new

    def sorted_points(self) -> List[Point]:
        if self._sorted is None:
            self._sorted = [Point(ts, f, v) for (ts, f), v in sorted(self.points.items())]
            self._timestamps = [p.timestamp for p in self._sorted]
        return self._sorted

    def window(self, t0: int, t1: int) -> List[Point]:
        points = self.sorted_points()
        lo = bisect.bisect_left(self._timestamps, t0)
        hi = bisect.bisect_left(self._timestamps, t1)
        return points[lo:hi]

    def drop_before(self, cutoff: int) -> int:
        stale = [slot for slot in self.points if slot[0] < cutoff]
        for slot in stale:
            del self.points[slot]
        if stale:
            self._sorted = None
        return len(stale)


class _Database:
    def __init__(self, name: str, segment: Optional[Path]):
        self.name = name
        self.segment = segment
        self.lock = threading.RLock()
        self.series: Dict[str, Dict[SeriesKey, _SeriesData]] = {}
        self.point_count = 0

    def index(self, metrics: List[Metric]) -> None:
        for metric in metrics:
            key = SeriesKey.of(self.name, metric.measurement, metric.tags)
            by_key = self.series.setdefault(metric.measurement, {})
            data = by_key.get(key)
            if data is None:
                data = by_key[key] = _SeriesData(key)
            for field, value in metric.fields.items():
                if data.put(metric.timestamp, field, value):
                    self.point_count += 1

    def matching(self, measurement: str, tag_filter: Mapping[str, str]) -> Iterator[_SeriesData]:
        for key, data in self.series.get(measurement, {}).items():
            if key.matches(tag_filter):
                yield data


class EmbeddedStore(StorageBackend):
    """
    In-memory index with optional append-only persistence.

    One writer at a time per database; queries hold the same lock so they see
    every batch acknowledged before them.
    """

    def __init__(
        self,
        directory: Optional[Union[str, Path]] = None,
        retention_ns: Optional[int] = None,
        max_points: Optional[int] = None,
        fsync: bool = False,
    ):
        self.directory = Path(directory) if directory is not None else None
        self.retention_ns = retention_ns
        self.max_points = max_points
        self.fsync = fsync
        self._lock = threading.Lock()
        self._databases: Dict[str, _Database] = {}

        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._replay()

    def get_name(self) -> str:
        return "embedded"

    # Persistence

    def _segment_path(self, db: str) -> Optional[Path]:
        if self.directory is None:
            return None
        return self.directory / f"{db}{SEGMENT_SUFFIX}"

    def _replay(self) -> None:
        manifest = self.directory / MANIFEST_NAME
        if not manifest.exists():
            return
        names = [n.strip() for n in manifest.read_text(encoding="utf-8").splitlines() if n.strip()]
        for name in names:
            database = _Database(name, self._segment_path(name))
            records = 0
            for body in self._read_records(database.segment):
                metrics, errors = parse_batch(body)
                if errors:
                    logger.warning("segment_record_invalid", db=name, errors=len(errors))
                database.index(metrics)
                records += 1
            self._databases[name] = database
            logger.info("database_replayed", db=name, records=records, points=database.point_count)
        if self.retention_ns is not None:
            self.prune()

    @staticmethod
    def _read_records(path: Path) -> Iterator[str]:
        if not path.exists():
            return
        data = path.read_bytes()
        offset = 0
        while offset + HEADER.size <= len(data):
            (length,) = HEADER.unpack_from(data, offset)
            start = offset + HEADER.size
            if start + length > len(data):
                logger.warning("segment_torn_record", path=str(path), offset=offset)
                return
            yield data[start:start + length].decode("utf-8")
            offset = start + length
        if offset != len(data):
            logger.warning("segment_torn_record", path=str(path), offset=offset)

    def _append(self, database: _Database, metrics: List[Metric]) -> None:
        payload = serialize_batch(metrics).encode("utf-8")
        try:
            with open(database.segment, "ab") as f:
                f.write(HEADER.pack(len(payload)))
                f.write(payload)
                f.flush()
                if self.fsync:
                    os.fsync(f.fileno())
        except OSError as e:
            raise IOFailure(f"cannot append to {database.segment}: {e}") from e

    def _database(self, db: str, create: bool) -> _Database:
        database = self._databases.get(db)
        if database is not None:
            return database
        if not create:
            raise UnknownDatabase(f"database '{db}' does not exist")
        if not valid_db_name(db):
            raise UnknownDatabase(f"invalid database name '{db}'")
        with self._lock:
            database = self._databases.get(db)
            if database is None:
                database = _Database(db, self._segment_path(db))
                if self.directory is not None:
                    try:
                        with open(self.directory / MANIFEST_NAME, "a", encoding="utf-8") as f:
                            f.write(db + "\n")
                    except OSError as e:
                        raise IOFailure(f"cannot update manifest: {e}") from e
                self._databases[db] = database
                logger.info("database_created", db=db)
        return database

    # Writes

    def write_points(self, db: str, metrics: List[Metric]) -> int:
        """
        Persist every field of every metric; creates ``db`` on first write.

        Raises:
            StorageFull: max_points would be exceeded
            IOFailure: the segment file could not be appended
        """
        if not metrics:
            return 0
        for metric in metrics:
            if metric.timestamp is None:
                raise ValueError("metrics must be stamped before storage")
            if self.directory is None:
                validate_metric(metric)

        database = self._database(db, create=True)
        with database.lock:
            if self.max_points is not None:
                incoming = sum(len(m.fields) for m in metrics)
                if self.point_count() + incoming > self.max_points:
                    raise StorageFull(f"store holds {self.point_count()} of {self.max_points} points")
            if database.segment is not None:
                self._append(database, metrics)
            database.index(metrics)
        return len(metrics)

    def prune(self, now: Optional[int] = None) -> int:
        """Drop points older than the retention period; returns the number dropped."""
        if self.retention_ns is None:
            return 0
        cutoff = (now if now is not None else time.time_ns()) - self.retention_ns
        dropped = 0
        for database in list(self._databases.values()):
            with database.lock:
                for by_key in database.series.values():
                    for data in by_key.values():
                        n = data.drop_before(cutoff)
                        database.point_count -= n
                        dropped += n
        if dropped:
            logger.info("retention_pruned", points=dropped)
        return dropped

    # Queries

    def query_range(
        self,
        db: str,
        measurement: str,
        tag_filter: Optional[Mapping[str, str]],
        t0: int,
        t1: int,
    ) -> List[Series]:
        """
        Series of ``measurement`` whose tags include ``tag_filter``, restricted to
        points with t0 <= t < t1.

        Raises:
            UnknownDatabase: ``db`` was never written
        """
        if t0 > t1:
            raise ValueError("query range start is after its end")
        database = self._database(db, create=False)
        tag_filter = tag_filter or {}
        with database.lock:
            result = [
                Series(data.key, data.window(t0, t1))
                for data in database.matching(measurement, tag_filter)
            ]
        result.sort(key=lambda s: s.key.tags)
        return result

    def list_databases(self) -> List[str]:
        return sorted(self._databases)

    def has_database(self, db: str) -> bool:
        return db in self._databases

    def list_measurements(
        self, db: str, tag_filter: Optional[Mapping[str, str]] = None
    ) -> Set[str]:
        """Measurements with at least one series matching ``tag_filter``."""
        database = self._database(db, create=False)
        tag_filter = tag_filter or {}
        with database.lock:
            return {
                name
                for name, by_key in database.series.items()
                if any(key.matches(tag_filter) and data.points for key, data in by_key.items())
            }

    def tag_values(
        self, db: str, measurement: str, tag: str, tag_filter: Optional[Mapping[str, str]] = None
    ) -> Set[str]:
        database = self._database(db, create=False)
        with database.lock:
            return {
                data.key.tag_dict[tag]
                for data in database.matching(measurement, tag_filter or {})
                if tag in data.key.tag_dict and data.points
            }

    def field_kinds(self, db: str, measurement: str) -> Dict[str, str]:
        """Field name -> value kind (float, int, bool, str) as last written."""
        database = self._database(db, create=False)
        kinds: Dict[str, str] = {}
        with database.lock:
            for data in database.matching(measurement, {}):
                for (_, field), value in data.points.items():
                    kinds[field] = value_kind(value)
        return kinds

    def point_count(self, db: Optional[str] = None) -> int:
        if db is not None:
            return self._database(db, create=False).point_count
        return sum(d.point_count for d in self._databases.values())

    def row_count(self, db: str, measurement: Optional[str] = None,
                  tag_filter: Optional[Mapping[str, str]] = None) -> int:
        """Distinct (series, timestamp) rows, i.e. stored metric lines."""
        database = self._database(db, create=False)
        names = [measurement] if measurement is not None else list(database.series)
        rows = 0
        with database.lock:
            for name in names:
                for data in database.matching(name, tag_filter or {}):
                    rows += len({ts for ts, _ in data.points})
        return rows
