"""
Scenario files: hosts, node profiles, job scripts and anomalies.

Durations and offsets are seconds in the file and nanoseconds in memory.

    name: computation-break
    cadence: 60
    duration: 3600
    hosts: [h1, h2, h3, h4]
    profile: healthy
    jobs:
      - {id: "1001", user: alice, hosts: [h1, h2, h3, h4], start: 0, end: 3600}
    anomalies:
      - {host: "*", metric: flops_dp, start: 1500, end: 2220, value: 20}
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..analysis.schema import require_metric
from ..config import ConfigSection, load_yaml
from ..errors import ConfigError
from .profiles import Profile, get_profile
from .streams import ALL_HOSTS, NS_PER_SECOND, Anomaly, AppEvent, AppSeries

# 2017-07-14T02:40:00Z; fixed so streams and reports are reproducible
DEFAULT_START_TIME = 1_500_000_000 * NS_PER_SECOND


def _ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_SECOND))


class ScenarioSection(ConfigSection):
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "name": {"type": "str", "default": "scenario"},
            "description": {"type": "str", "default": ""},
            "db": {"type": "str", "default": "jobs"},
            "cadence": {"type": "float", "default": 60.0, "min": 1e-3,
                        "help": "Seconds between samples"},
            "duration": {"type": "float", "default": 3600.0, "min": 1e-3},
            "seed": {"type": "int", "default": 0, "min": 0},
            "start_time": {"type": "int", "default": DEFAULT_START_TIME, "min": 0,
                           "help": "Virtual epoch of offset 0, ns"},
            "hosts": {"type": "list", "default": None},
            "profile": {"type": "str", "default": "healthy"},
            "host_profiles": {"type": "map", "default": {}},
        }


class JobSection(ConfigSection):
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "id": {"type": "str", "default": None},
            "user": {"type": "str", "default": None},
            "hosts": {"type": "list", "default": None},
            "start": {"type": "float", "default": 0.0, "min": 0.0},
            "end": {"type": "float", "default": None, "optional": True, "min": 0.0},
            "tags": {"type": "map", "default": {}},
        }


class AnomalySection(ConfigSection):
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "host": {"type": "str", "default": ALL_HOSTS},
            "metric": {"type": "str", "default": None},
            "start": {"type": "float", "default": None, "min": 0.0},
            "end": {"type": "float", "default": None, "min": 0.0},
            "value": {"type": "float", "default": None, "optional": True},
            "scale": {"type": "float", "default": None, "optional": True, "min": 0.0},
        }


class AppSeriesSection(ConfigSection):
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "host": {"type": "str", "default": None},
            "name": {"type": "str", "default": None},
            "value": {"type": "float", "default": None},
            "jitter": {"type": "float", "default": 0.0, "min": 0.0, "max": 0.99},
            "start": {"type": "float", "default": 0.0, "min": 0.0},
            "end": {"type": "float", "default": None, "optional": True, "min": 0.0},
            "tags": {"type": "map", "default": {}},
        }


class AppEventSection(ConfigSection):
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "host": {"type": "str", "default": None},
            "name": {"type": "str", "default": None},
            "text": {"type": "str", "default": ""},
            "at": {"type": "float", "default": None, "min": 0.0},
            "tags": {"type": "map", "default": {}},
        }


@dataclass(frozen=True)
class ScriptedJob:
    job_id: str
    user: str
    hosts: List[str]
    start: int
    end: Optional[int] = None
    tags: Mapping[str, str] = field(default_factory=dict)

    def start_document(self, start_time: int) -> Dict[str, Any]:
        doc = {"action": "start", "jobid": self.job_id, "user": self.user,
               "hosts": list(self.hosts), "timestamp": start_time + self.start}
        if self.tags:
            doc["tags"] = dict(self.tags)
        return doc

    def end_document(self, start_time: int) -> Dict[str, Any]:
        return {"action": "end", "jobid": self.job_id, "timestamp": start_time + self.end}


@dataclass
class Scenario:
    name: str
    hosts: List[str]
    cadence: int
    duration: int
    jobs: List[ScriptedJob] = field(default_factory=list)
    anomalies: List[Anomaly] = field(default_factory=list)
    app_series: List[AppSeries] = field(default_factory=list)
    app_events: List[AppEvent] = field(default_factory=list)
    profile: str = "healthy"
    host_profiles: Dict[str, str] = field(default_factory=dict)
    db: str = "jobs"
    seed: int = 0
    start_time: int = DEFAULT_START_TIME
    description: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def ticks(self) -> int:
        return self.duration // self.cadence

    def profile_for(self, host: str) -> Profile:
        return get_profile(self.host_profiles.get(host, self.profile))

    def validate(self) -> None:
        """
        Raises:
            ConfigError: intervals outside the duration, or hosts outside the scenario
        """
        if not self.hosts:
            raise ConfigError(f"{self.name}: no hosts")
        if len(set(self.hosts)) != len(self.hosts):
            raise ConfigError(f"{self.name}: duplicate hosts")
        if self.cadence <= 0 or self.duration < self.cadence:
            raise ConfigError(f"{self.name}: duration must cover at least one cadence")
        known = set(self.hosts)
        for name in [self.profile] + list(self.host_profiles.values()):
            get_profile(name)
        stray = set(self.host_profiles) - known
        if stray:
            raise ConfigError(f"{self.name}: host_profiles names unknown hosts {sorted(stray)}")

        ids = set()
        for job in self.jobs:
            if job.job_id in ids:
                raise ConfigError(f"{self.name}: job {job.job_id} scripted twice")
            ids.add(job.job_id)
            if not job.hosts or not set(job.hosts) <= known:
                raise ConfigError(f"{self.name}: job {job.job_id} hosts must be scenario hosts")
            if job.start > self.duration:
                raise ConfigError(f"{self.name}: job {job.job_id} starts after the scenario")
            if job.end is not None and not job.start <= job.end <= self.duration:
                raise ConfigError(f"{self.name}: job {job.job_id} end outside [start, duration]")

        for anomaly in self.anomalies:
            require_metric(anomaly.metric)
            if anomaly.host != ALL_HOSTS and anomaly.host not in known:
                raise ConfigError(f"{self.name}: anomaly on unknown host {anomaly.host}")
            if not 0 <= anomaly.start < anomaly.end <= self.duration:
                raise ConfigError(
                    f"{self.name}: anomaly {anomaly.metric}@{anomaly.host} outside the duration"
                )
            if (anomaly.value is None) == (anomaly.scale is None):
                raise ConfigError(f"{self.name}: anomaly needs exactly one of value or scale")
        for item in list(self.app_series) + list(self.app_events):
            if item.host not in known:
                raise ConfigError(f"{self.name}: application metric on unknown host {item.host}")
        for event in self.app_events:
            if event.at > self.duration:
                raise ConfigError(f"{self.name}: event {event.name} after the scenario end")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Scenario":
        doc = dict(doc)
        lists = {key: doc.pop(key, None) or []
                 for key in ("jobs", "anomalies", "app_series", "app_events")}
        for key, value in lists.items():
            if not isinstance(value, list):
                raise ConfigError(f"{key} must be a list")
        top = ScenarioSection().validate_parameters(doc)
        if not top["hosts"]:
            raise ConfigError("hosts must list at least one host")

        duration = _ns(top["duration"])
        jobs = []
        for entry in _entries(JobSection(), lists["jobs"], "jobs"):
            jobs.append(ScriptedJob(
                entry["id"], entry["user"], entry["hosts"], _ns(entry["start"]),
                _ns(entry["end"]) if entry["end"] is not None else None, entry["tags"],
            ))
        anomalies = [
            Anomaly(e["host"], e["metric"], _ns(e["start"]), _ns(e["end"]), e["value"], e["scale"])
            for e in _entries(AnomalySection(), lists["anomalies"], "anomalies")
        ]
        app_series = [
            AppSeries(e["host"], e["name"], e["value"], _ns(e["start"]),
                      _ns(e["end"]) if e["end"] is not None else duration, e["jitter"], e["tags"])
            for e in _entries(AppSeriesSection(), lists["app_series"], "app_series")
        ]
        app_events = [
            AppEvent(e["host"], e["name"], e["text"], _ns(e["at"]), e["tags"])
            for e in _entries(AppEventSection(), lists["app_events"], "app_events")
        ]
        return cls(
            name=top["name"],
            hosts=top["hosts"],
            cadence=_ns(top["cadence"]),
            duration=duration,
            jobs=jobs,
            anomalies=anomalies,
            app_series=app_series,
            app_events=app_events,
            profile=top["profile"],
            host_profiles=top["host_profiles"],
            db=top["db"],
            seed=top["seed"],
            start_time=top["start_time"],
            description=top["description"],
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        try:
            return cls.from_dict(load_yaml(path))
        except ConfigError as e:
            raise ConfigError(f"{path}: {e}") from e


def _entries(section: ConfigSection, items: List[Any], key: str) -> List[Dict[str, Any]]:
    validated = []
    for i, item in enumerate(items):
        if not isinstance(item, Mapping):
            raise ConfigError(f"{key}[{i}] must be a mapping")
        try:
            validated.append(section.validate_parameters(item))
        except ConfigError as e:
            raise ConfigError(f"{key}[{i}]: {e}") from e
    return validated
