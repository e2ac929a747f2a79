"""
Job tag store.

Job start and end signals register a job's tags under each participating
hostname. Every metric the router receives is looked up by its ``hostname`` tag
and copied once per job active on that host, carrying the job's tags.

Mutations are serialized by a lock and publish a new immutable host table;
``enrich`` reads whichever table is current without locking.
"""

import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .errors import DuplicateJob, InvalidJob, UnknownDatabase, UnknownJob
from .lineproto import INT64_MAX, INT64_MIN, Metric
from .logs import get_logger

logger = get_logger(__name__)

HOSTNAME_TAG = "hostname"
JOBID_TAG = "jobid"
USER_TAG = "user"
RESERVED_TAGS = frozenset((HOSTNAME_TAG, JOBID_TAG, USER_TAG))

JOB_EVENT_MEASUREMENT = "job_event"


def _require_single_line(value: str, what: str) -> None:
    # signal values end up in stored annotation rows
    if "\n" in value or "\r" in value:
        raise InvalidJob(f"{what} contains a line break")


@dataclass(frozen=True)
class JobRecord:
    """A job's identity, owner, hosts and lifecycle timestamps."""
    job_id: str
    user: str
    hosts: FrozenSet[str]
    start_time: int
    end_time: Optional[int] = None
    extra_tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.job_id:
            raise InvalidJob("job id is empty")
        if not self.user:
            raise InvalidJob(f"job {self.job_id}: user is empty")
        if not self.hosts:
            raise InvalidJob(f"job {self.job_id}: host set is empty")
        if any(not h for h in self.hosts):
            raise InvalidJob(f"job {self.job_id}: empty hostname in host set")
        _require_single_line(self.job_id, "job id")
        _require_single_line(self.user, f"job {self.job_id}: user")
        for host in self.hosts:
            _require_single_line(host, f"job {self.job_id}: hostname")
        for key, value in self.extra_tags.items():
            _require_single_line(key, f"job {self.job_id}: tag key")
            _require_single_line(value, f"job {self.job_id}: tag '{key}'")
        if self.job_id in RESERVED_TAGS or self.user in RESERVED_TAGS:
            raise InvalidJob(f"job {self.job_id}: id or user collides with a reserved tag key")
        reserved = RESERVED_TAGS.intersection(self.extra_tags)
        if reserved:
            raise InvalidJob(
                f"job {self.job_id}: extra tags use reserved keys {', '.join(sorted(reserved))}"
            )
        if self.end_time is not None and self.end_time < self.start_time:
            raise InvalidJob(f"job {self.job_id}: end_time precedes start_time")
        # normalize so callers may pass lists and plain dicts
        object.__setattr__(self, "hosts", frozenset(self.hosts))
        object.__setattr__(self, "extra_tags", dict(self.extra_tags))

    @property
    def is_running(self) -> bool:
        return self.end_time is None

    def job_tags(self) -> Dict[str, str]:
        """Tags merged into every metric from this job's hosts."""
        tags = dict(self.extra_tags)
        tags[JOBID_TAG] = self.job_id
        tags[USER_TAG] = self.user
        return tags

    def sorted_hosts(self) -> List[str]:
        return sorted(self.hosts)

    def annotation(self, event: str, timestamp: int) -> Metric:
        """The ``job_event`` row stored for a start or end signal."""
        tags = self.job_tags()
        tags["event"] = event
        return Metric(
            JOB_EVENT_MEASUREMENT,
            tags,
            {"text": f"{self.job_id} {event}", "hosts": ",".join(self.sorted_hosts())},
            timestamp,
        )


@dataclass(frozen=True)
class JobSignal:
    """
    A decoded ``POST /job`` document.

    ``{action: start|end, jobid, user, hosts, tags, timestamp}``; user and hosts
    are required for start only.
    """
    action: str
    job_id: str
    user: Optional[str] = None
    hosts: Tuple[str, ...] = ()
    tags: Mapping[str, str] = field(default_factory=dict)
    timestamp: Optional[int] = None

    @classmethod
    def from_document(cls, doc: Any) -> "JobSignal":
        if not isinstance(doc, Mapping):
            raise InvalidJob("signal document must be an object")
        action = doc.get("action")
        if action not in ("start", "end"):
            raise InvalidJob("action must be 'start' or 'end'")
        job_id = doc.get("jobid")
        if not isinstance(job_id, str) or not job_id:
            raise InvalidJob("jobid must be a non-empty string")
        _require_single_line(job_id, "jobid")

        timestamp = doc.get("timestamp")
        if timestamp is not None and (isinstance(timestamp, bool) or not isinstance(timestamp, int)):
            raise InvalidJob("timestamp must be an integer (ns)")

        tags = doc.get("tags") or {}
        if not isinstance(tags, Mapping) or not all(
            isinstance(k, str) and isinstance(v, str) and k and v for k, v in tags.items()
        ):
            raise InvalidJob("tags must map non-empty strings to non-empty strings")
        for key, value in tags.items():
            _require_single_line(key, "tag key")
            _require_single_line(value, f"tag '{key}'")

        if action == "end":
            return cls(action, job_id, tags=dict(tags), timestamp=timestamp)

        user = doc.get("user")
        if not isinstance(user, str) or not user:
            raise InvalidJob("start signal requires a non-empty user")
        hosts = doc.get("hosts")
        if not isinstance(hosts, list) or not hosts or not all(
            isinstance(h, str) and h for h in hosts
        ):
            raise InvalidJob("start signal requires a non-empty list of hostnames")
        _require_single_line(user, "user")
        for host in hosts:
            _require_single_line(host, "hostname")
        return cls(action, job_id, user, tuple(hosts), dict(tags), timestamp)

    def to_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"action": self.action, "jobid": self.job_id}
        if self.action == "start":
            doc["user"] = self.user
            doc["hosts"] = list(self.hosts)
        if self.tags:
            doc["tags"] = dict(self.tags)
        if self.timestamp is not None:
            doc["timestamp"] = self.timestamp
        return doc

    def to_record(self, default_time: int) -> JobRecord:
        return JobRecord(
            job_id=self.job_id,
            user=self.user or "",
            hosts=frozenset(self.hosts),
            start_time=self.timestamp if self.timestamp is not None else default_time,
            extra_tags=dict(self.tags),
        )


class TagStore:
    """
    Hostname-keyed store of active jobs.

    ``table`` maps hostname to the tuple of active jobs on it and is replaced, never
    mutated, by ``job_start`` and ``job_end``. Ended jobs stay in ``_jobs`` with
    their end time so dashboards and analysis can still find them.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._table: Dict[str, Tuple[JobRecord, ...]] = {}
        self._jobs: Dict[str, JobRecord] = {}
        self.missing_hostname = 0
        self.reserved_tags_dropped = 0

    def job_start(
        self, record: JobRecord, announce: Optional[Callable[[JobRecord], None]] = None
    ) -> Metric:
        """
        Register ``record`` on all its hosts; returns the start annotation.

        ``announce`` runs once the start is accepted and before the new host table
        is visible to ``enrich``.
        """
        with self._lock:
            current = self._jobs.get(record.job_id)
            if current is not None and current.is_running:
                raise DuplicateJob(f"job {record.job_id} is already active")
            if not record.is_running:
                record = replace(record, end_time=None)

            table = dict(self._table)
            for host in record.hosts:
                table[host] = table.get(host, ()) + (record,)
            if announce is not None:
                announce(record)
            self._jobs[record.job_id] = record
            self._table = table

        logger.info("job_started", jobid=record.job_id, user=record.user, hosts=len(record.hosts))
        return record.annotation("start", record.start_time)

    def job_end(self, job_id: str, end_time: int) -> Metric:
        """Remove ``job_id`` from its hosts; returns the end annotation."""
        with self._lock:
            current = self._jobs.get(job_id)
            if current is None or not current.is_running:
                raise UnknownJob(f"job {job_id} is not active")
            ended = replace(current, end_time=max(end_time, current.start_time))

            table = dict(self._table)
            for host in current.hosts:
                remaining = tuple(j for j in table.get(host, ()) if j.job_id != job_id)
                if remaining:
                    table[host] = remaining
                else:
                    table.pop(host, None)
            self._jobs[job_id] = ended
            self._table = table

        logger.info("job_ended", jobid=job_id, runtime_s=(ended.end_time - ended.start_time) / 1e9)
        return ended.annotation("end", ended.end_time)

    def enrich(self, metric: Metric) -> List[Metric]:
        """
        Return one copy of ``metric`` per job active on its host, carrying that job's
        tags; a host without jobs yields the metric itself. Collector-supplied
        ``jobid``/``user`` tags are dropped.
        """
        tags = metric.tags
        if JOBID_TAG in tags or USER_TAG in tags:
            tags = {k: v for k, v in tags.items() if k != JOBID_TAG and k != USER_TAG}
            self.reserved_tags_dropped += 1
            metric = metric.with_tags(tags)

        hostname = tags.get(HOSTNAME_TAG)
        if hostname is None:
            self.missing_hostname += 1
            logger.debug("metric_without_hostname", measurement=metric.measurement)
            return [metric]

        jobs = self._table.get(hostname)
        if not jobs:
            return [metric]

        enriched = []
        for job in jobs:
            merged = dict(tags)
            merged.update(job.job_tags())
            merged[HOSTNAME_TAG] = hostname
            enriched.append(metric.with_tags(merged))
        return enriched

    def active_jobs(self, hostname: Optional[str] = None) -> List[JobRecord]:
        """Jobs currently active on ``hostname``, or on any host when None."""
        if hostname is not None:
            return list(self._table.get(hostname, ()))
        return [job for job in self._jobs.values() if job.is_running]

    def snapshot(self) -> Mapping[str, Tuple[JobRecord, ...]]:
        """The current host table; later starts and ends never change it."""
        return self._table

    def get_job(self, job_id: str) -> Optional[JobRecord]:
        return self._jobs.get(job_id)

    def jobs(self) -> List[JobRecord]:
        return list(self._jobs.values())

    def restore(self, records: Iterable[JobRecord]) -> None:
        """Load records recovered from storage, e.g. after a restart."""
        for record in records:
            if record.job_id in self._jobs:
                continue
            if record.is_running:
                self.job_start(record)
            else:
                with self._lock:
                    self._jobs[record.job_id] = record


def jobs_from_annotations(store, db: str) -> List[JobRecord]:
    """
    Rebuild job records from the ``job_event`` rows stored in ``db``.

    ``store`` is anything with ``query_range``; an unknown database yields no jobs.
    """
    try:
        series_list = store.query_range(db, JOB_EVENT_MEASUREMENT, {}, INT64_MIN, INT64_MAX)
    except UnknownDatabase:
        return []

    starts: Dict[str, JobRecord] = {}
    ends: Dict[str, int] = {}
    for series in series_list:
        tags = series.key.tag_dict
        job_id = tags.get(JOBID_TAG)
        event = tags.get("event")
        if not job_id or event not in ("start", "end"):
            continue
        for point in series.points:
            if event == "end":
                ends[job_id] = point.timestamp
            elif point.field == "hosts" and isinstance(point.value, str):
                extra = {k: v for k, v in tags.items() if k not in RESERVED_TAGS and k != "event"}
                starts[job_id] = JobRecord(
                    job_id=job_id,
                    user=tags.get(USER_TAG, ""),
                    hosts=frozenset(h for h in point.value.split(",") if h),
                    start_time=point.timestamp,
                    extra_tags=extra,
                )

    records = []
    for job_id, record in sorted(starts.items()):
        if job_id in ends and ends[job_id] >= record.start_time:
            record = replace(record, end_time=ends[job_id])
        records.append(record)
    return records
