"""
Scenario runner.

Time advances tick by tick on a scenario clock. Each tick first sends the job
signals that are due (serialized, in script order), then every host emits its
batch concurrently. With ``time_scale`` N, one wall second covers N scenario
seconds; 0 runs as fast as the router accepts.
"""

import json
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import requests

from ..errors import EndpointUnreachable
from ..lineproto import Metric, serialize_batch
from ..logs import get_logger
from .scenario import Scenario
from .streams import NS_PER_SECOND, host_ticks

logger = get_logger(__name__)


class Transport(ABC):
    """Where a scenario sends its lines and job signals."""

    @abstractmethod
    def write(self, db: str, body: str) -> int:
        """Send a line-protocol batch; returns the number of rejected lines."""
        pass

    @abstractmethod
    def signal(self, document: Mapping[str, Any]) -> bool:
        """Send a job signal; False when the router refused it."""
        pass

    def close(self) -> None:
        pass


class HttpTransport(Transport):
    def __init__(self, endpoint: str, timeout: float = 10.0,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def _post(self, path: str, **kwargs) -> requests.Response:
        try:
            response = self.session.post(f"{self.endpoint}{path}", timeout=self.timeout, **kwargs)
        except requests.RequestException as e:
            raise EndpointUnreachable(f"{self.endpoint}: {e}") from e
        if response.status_code >= 500:
            raise EndpointUnreachable(f"{self.endpoint}{path}: HTTP {response.status_code}")
        return response

    def write(self, db: str, body: str) -> int:
        response = self._post("/write", params={"db": db}, data=body.encode("utf-8"))
        if response.status_code == 400:
            return body.count("\n") + 1
        return int(response.headers.get("X-Jobmon-Rejected-Lines", 0))

    def signal(self, document: Mapping[str, Any]) -> bool:
        response = self._post("/job", json=dict(document))
        if response.status_code != 200:
            logger.warning("signal_refused", jobid=document.get("jobid"),
                           status=response.status_code, reason=response.text.strip())
            return False
        return True

    def close(self) -> None:
        self.session.close()


class LocalTransport(Transport):
    """Drives an in-process ``MetricsRouter`` directly."""

    def __init__(self, router):
        self.router = router

    def write(self, db: str, body: str) -> int:
        result = self.router.handle_write(db, body)
        if result.status == 400:
            return body.count("\n") + 1
        return int(result.headers.get("X-Jobmon-Rejected-Lines", 0))

    def signal(self, document: Mapping[str, Any]) -> bool:
        return self.router.handle_job_signal(dict(document)).status == 200


@dataclass
class ScenarioReport:
    scenario: str
    lines_sent: Dict[str, int] = field(default_factory=dict)
    lines_rejected: int = 0
    signals_delivered: int = 0
    signals_failed: List[str] = field(default_factory=list)
    ticks: int = 0
    aborted: Optional[str] = None
    elapsed: float = 0.0

    @property
    def total_lines(self) -> int:
        return sum(self.lines_sent.values())

    @property
    def ok(self) -> bool:
        return self.aborted is None and not self.signals_failed and not self.lines_rejected

    def to_dict(self) -> Dict[str, Any]:
        """Everything but the wall-clock time, so reruns compare equal."""
        return {
            "scenario": self.scenario,
            "lines_sent": dict(sorted(self.lines_sent.items())),
            "total_lines": self.total_lines,
            "lines_rejected": self.lines_rejected,
            "signals_delivered": self.signals_delivered,
            "signals_failed": list(self.signals_failed),
            "ticks": self.ticks,
            "aborted": self.aborted,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def signal_schedule(scenario: Scenario) -> List[Tuple[int, int, Dict[str, Any]]]:
    """(offset, order, document) of every scripted signal, in sending order."""
    schedule = []
    for order, job in enumerate(scenario.jobs):
        schedule.append((job.start, 2 * order, job.start_document(scenario.start_time)))
        if job.end is not None:
            schedule.append((job.end, 2 * order + 1, job.end_document(scenario.start_time)))
    # ends before starts at the same offset, so a host can change jobs in one tick
    schedule.sort(key=lambda item: (item[0], item[2]["action"] != "end", item[1]))
    return schedule


def run_scenario(
    scenario: Scenario,
    transport: Transport,
    time_scale: float = 0.0,
    seed: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> ScenarioReport:
    """
    Play ``scenario`` against ``transport``. An unreachable endpoint stops the run;
    the report then covers what was sent and names the failure in ``aborted``.
    """
    seed = scenario.seed if seed is None else seed
    report = ScenarioReport(scenario.name, {host: 0 for host in scenario.hosts})
    streams: Dict[str, Iterator[Tuple[int, List[Metric]]]] = {
        host: host_ticks(
            host, scenario.cadence, scenario.profile_for(host), scenario.ticks,
            scenario.start_time, seed, scenario.anomalies, scenario.app_series,
            scenario.app_events,
        )
        for host in scenario.hosts
    }
    pending = signal_schedule(scenario)
    tick_wall = scenario.cadence / NS_PER_SECOND / time_scale if time_scale > 0 else 0.0

    def send_signals(until: int) -> None:
        while pending and pending[0][0] <= until:
            _, _, document = pending.pop(0)
            if transport.signal(document):
                report.signals_delivered += 1
            else:
                report.signals_failed.append(f"{document['action']} {document['jobid']}")

    def emit(host: str) -> Tuple[str, int, int]:
        _, batch = next(streams[host])
        if not batch:
            return host, 0, 0
        return host, len(batch), transport.write(scenario.db, serialize_batch(batch))

    logger.info("scenario_started", scenario=scenario.name, hosts=len(scenario.hosts),
                ticks=scenario.ticks, jobs=len(scenario.jobs), time_scale=time_scale)
    started = time.monotonic()
    workers = max_workers or min(len(scenario.hosts), 32)
    try:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="simhost") as pool:
            for k in range(scenario.ticks):
                offset = k * scenario.cadence
                send_signals(offset)
                for host, sent, rejected in pool.map(emit, scenario.hosts):
                    report.lines_sent[host] += sent
                    report.lines_rejected += rejected
                report.ticks += 1
                if tick_wall:
                    time.sleep(max(0.0, started + (k + 1) * tick_wall - time.monotonic()))
            send_signals(scenario.duration)
    except EndpointUnreachable as e:
        report.aborted = str(e)
        logger.error("scenario_aborted", scenario=scenario.name, tick=report.ticks, error=str(e))

    report.elapsed = time.monotonic() - started
    logger.info("scenario_finished", scenario=scenario.name, lines=report.total_lines,
                signals=report.signals_delivered, aborted=report.aborted is not None)
    return report
