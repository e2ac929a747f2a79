"""
Dashboard agent.

Registered as the router's job hook: a job start generates the job dashboard,
a periodic refresh regenerates dashboards of running jobs, and a job end writes
a final snapshot. The admin overview is rewritten after each of these.
Dashboards are written to a directory for the viewer's provisioning mechanism
and optionally pushed through the viewer's HTTP API.
"""

import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Set, Tuple, Union

import requests

from ..analysis import AnalysisConfig, evaluate_job, load_analysis_config
from ..analysis.evaluate import host_series, job_window
from ..config import ConfigSection
from ..errors import ConfigError, EndpointUnreachable, JobmonError, UnknownDatabase
from ..jobtags import HOSTNAME_TAG, JOB_EVENT_MEASUREMENT, JOBID_TAG, JobRecord, TagStore
from ..logs import get_logger
from ..router.config import RouteConfig
from ..router.core import SELF_MEASUREMENT
from ..tsstore import EmbeddedStore
from ..usermetric.client import EVENT_FIELD
from .expand import STATUS_COLORS, expand_dashboard, render, select_templates
from .overview import (
    OVERVIEW_UID,
    OverviewEntry,
    build_admin_overview,
    dashboard_uid,
    overview_dashboard,
)
from .templates import TemplateSet, default_template_dir
from .thumbnail import Sparkline, hex_to_rgb

logger = get_logger(__name__)

NOT_PLOTTED = frozenset((JOB_EVENT_MEASUREMENT, SELF_MEASUREMENT))


class DashgenConfigSection(ConfigSection):
    section_name = "dashgen"

    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        return {
            "template_dir": {"type": "path", "default": None, "optional": True,
                             "help": "Template directory (the repository's templates/ if unset)"},
            "output_dir": {"type": "path", "default": "dashboards",
                           "help": "Provisioning directory the viewer reads"},
            "refresh_interval": {"type": "float", "default": 60.0, "min": 0.0,
                                 "help": "Seconds between refreshes of running jobs (0 disables)"},
            "analysis_config": {"type": "path", "default": None, "optional": True},
            "thumbnails": {"type": "bool", "default": True},
            "thumbnail_metric": {"type": "str", "default": "cpu_load"},
            "thumbnail_format": {"type": "choice", "default": "svg",
                                 "choices": ["svg", "png", "both"]},
            "grafana_url": {"type": "str", "default": None, "optional": True,
                            "help": "Push dashboards to this viewer as well"},
            "grafana_token": {"type": "str", "default": None, "optional": True},
            "grafana_folder_id": {"type": "int", "default": 0, "min": 0},
        }


@dataclass(frozen=True)
class DashgenConfig:
    template_dir: Optional[str] = None
    output_dir: str = "dashboards"
    refresh_interval: float = 60.0
    analysis_config: Optional[str] = None
    thumbnails: bool = True
    thumbnail_metric: str = "cpu_load"
    thumbnail_format: str = "svg"
    grafana_url: Optional[str] = None
    grafana_token: Optional[str] = None
    grafana_folder_id: int = 0

    @classmethod
    def load(cls, path=None, overrides: Optional[Mapping[str, Any]] = None,
             environ: Optional[Mapping[str, str]] = None) -> "DashgenConfig":
        return cls(**DashgenConfigSection().load(path, overrides, environ))

    def templates(self) -> TemplateSet:
        directory = self.template_dir or default_template_dir()
        if directory is None:
            raise ConfigError("no template directory configured")
        return TemplateSet.load(directory)


class GrafanaPusher:
    """POSTs dashboards to ``<url>/api/dashboards/db``."""

    def __init__(self, url: str, token: Optional[str] = None, folder_id: int = 0,
                 timeout: float = 10.0, session: Optional[requests.Session] = None):
        self.url = url.rstrip("/")
        self.folder_id = folder_id
        self.timeout = timeout
        self.session = session or requests.Session()
        if token:
            self.session.headers.update({"Authorization": f"Bearer {token}"})

    def push(self, dashboard: Dict[str, Any]) -> None:
        payload = {"dashboard": dashboard, "folderId": self.folder_id, "overwrite": True}
        try:
            response = self.session.post(f"{self.url}/api/dashboards/db", json=payload,
                                         timeout=self.timeout)
        except requests.RequestException as e:
            raise EndpointUnreachable(f"{self.url}: {e}") from e
        if response.status_code >= 400:
            raise EndpointUnreachable(
                f"{self.url}: HTTP {response.status_code} {response.text.strip()[:200]}"
            )
        logger.debug("dashboard_pushed", uid=dashboard.get("uid"))


class DashboardAgent:
    """
    Args:
        store: Queryable store the router writes to
        tagstore: The router's job tag store, read only
        templates: Dashboard, row and panel templates
        analysis: Rules, tree and ceilings for the evaluation header
        output_dir: Provisioning directory
        route_config: Database naming (global db, per-user duplication)
        refresh_interval: Seconds between periodic refreshes, 0 disables
    """

    def __init__(
        self,
        store: EmbeddedStore,
        tagstore: TagStore,
        templates: TemplateSet,
        analysis: Optional[AnalysisConfig] = None,
        output_dir: Union[str, Path] = "dashboards",
        route_config: Optional[RouteConfig] = None,
        refresh_interval: float = 60.0,
        thumbnails: bool = True,
        thumbnail_metric: str = "cpu_load",
        thumbnail_format: str = "svg",
        pusher: Optional[GrafanaPusher] = None,
        clock: Callable[[], int] = time.time_ns,
    ):
        self.store = store
        self.tagstore = tagstore
        self.templates = templates
        self.analysis = analysis or load_analysis_config()
        self.output_dir = Path(output_dir)
        self.route_config = route_config or RouteConfig()
        self.refresh_interval = refresh_interval
        self.thumbnails = thumbnails
        self.thumbnail_metric = thumbnail_metric
        self.thumbnail_format = thumbnail_format
        self.pusher = pusher
        self.clock = clock

        self._entries: Dict[str, OverviewEntry] = {}
        self._lock = threading.RLock()

    @classmethod
    def from_config(cls, path: Optional[Union[str, Path]], store: EmbeddedStore,
                    tagstore: TagStore, route_config: Optional[RouteConfig] = None
                    ) -> "DashboardAgent":
        config = DashgenConfig.load(path)
        pusher = None
        if config.grafana_url:
            pusher = GrafanaPusher(config.grafana_url, config.grafana_token,
                                   config.grafana_folder_id)
        return cls(
            store,
            tagstore,
            config.templates(),
            load_analysis_config(config.analysis_config),
            output_dir=config.output_dir,
            route_config=route_config,
            refresh_interval=config.refresh_interval,
            thumbnails=config.thumbnails,
            thumbnail_metric=config.thumbnail_metric,
            thumbnail_format=config.thumbnail_format,
            pusher=pusher,
        )

    def metrics_db(self, job: JobRecord) -> str:
        """Per-user database when duplication is on, else the global one."""
        if self.route_config.per_user_duplication:
            return self.route_config.user_db(job.user)
        return self.route_config.global_db

    def dashboard_path(self, job_id: str) -> Path:
        return self.output_dir / f"{dashboard_uid(job_id)}.json"

    # Store probes

    def probe(self, job: JobRecord, db: str) -> Tuple[Dict[str, Set[str]], Set[str]]:
        """Metrics present per job node, and measurements carrying text events."""
        available: Dict[str, Set[str]] = {}
        events: Set[str] = set()
        try:
            for host in job.sorted_hosts():
                names = self.store.list_measurements(db, {JOBID_TAG: job.job_id,
                                                          HOSTNAME_TAG: host})
                available[host] = set(names) - NOT_PLOTTED
            for name in set().union(*available.values()):
                if self.store.field_kinds(db, name).get(EVENT_FIELD) == "str":
                    events.add(name)
        except UnknownDatabase:
            return {h: set() for h in job.hosts}, set()
        return available, events

    # Generation

    def generate(self, job: JobRecord) -> Dict[str, Any]:
        """Evaluate ``job``, expand its dashboard and write it out."""
        with self._lock:
            db = self.metrics_db(job)
            available, events = self.probe(job, db)
            evaluation = evaluate_job(job, self.analysis.rules, self.store, db,
                                      self.analysis.tree, self.analysis.ceilings,
                                      now=self.clock())
            selected = select_templates(job.sorted_hosts(), available, self.templates)
            # event measurements get annotations, not panels
            selected = [t for t in selected if not (t.requires & events)]
            dashboard = expand_dashboard(job, self.templates, evaluation, selected, db, events)

            self._write(self.dashboard_path(job.job_id), render(dashboard))
            entry = OverviewEntry(job, evaluation, _panel_ids(dashboard))
            if self.thumbnails:
                entry.thumbnail = self._thumbnail(job, db, evaluation.worst_status())
            if job.is_running:
                self._entries[job.job_id] = entry
            else:
                self._entries.pop(job.job_id, None)
            self._push(dashboard)

            logger.info("dashboard_generated", jobid=job.job_id, db=db,
                        templates=len(selected), worst=evaluation.worst_status(),
                        running=job.is_running)
            return dashboard

    def _thumbnail(self, job: JobRecord, db: str, status: str) -> Optional[str]:
        t0, t1 = job_window(job, self.clock())
        series = {}
        for host in job.sorted_hosts():
            try:
                series[host] = host_series(self.store, db, self.thumbnail_metric, job,
                                           host, t0, t1).numeric_arrays()
            except JobmonError:
                return None
        sparkline = Sparkline.from_series(series, status_color=hex_to_rgb(STATUS_COLORS[status]))
        thumbs = self.output_dir / "thumbs"
        thumbs.mkdir(parents=True, exist_ok=True)
        name = dashboard_uid(job.job_id)
        if self.thumbnail_format in ("png", "both"):
            sparkline.to_png(thumbs / f"{name}.png")
        if self.thumbnail_format in ("svg", "both"):
            sparkline.to_svg(thumbs / f"{name}.svg")
            return f"thumbs/{name}.svg"
        return f"thumbs/{name}.png"

    def _push(self, dashboard: Dict[str, Any]) -> None:
        if self.pusher is None:
            return
        try:
            self.pusher.push(dashboard)
        except EndpointUnreachable as e:
            logger.warning("dashboard_push_failed", uid=dashboard.get("uid"), error=str(e))

    def _write(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    # Overview

    def overview(self) -> Dict[str, Any]:
        with self._lock:
            return build_admin_overview(list(self._entries.values()))

    def write_overview(self) -> Path:
        with self._lock:
            overview = self.overview()
            path = self.output_dir / f"{OVERVIEW_UID}.json"
            self._write(path, render(overview_dashboard(overview)))
            self._push(overview_dashboard(overview))
            return path

    # Triggers

    def on_job_event(self, event: str, job: JobRecord) -> None:
        """Router job hook: ``event`` is start or end."""
        with self._lock:
            self.generate(job)
            self.write_overview()

    def refresh(self) -> List[str]:
        """Regenerate dashboards of running jobs; returns their ids."""
        with self._lock:
            active = self.tagstore.active_jobs()
            active_ids = {job.job_id for job in active}
            for job_id in list(self._entries):
                if job_id not in active_ids:
                    del self._entries[job_id]
            for job in active:
                try:
                    self.generate(job)
                except JobmonError:
                    logger.exception("dashboard_refresh_failed", jobid=job.job_id)
            self.write_overview()
            return sorted(active_ids)


def _panel_ids(dashboard: Mapping[str, Any]) -> List[int]:
    """Ids of plotted panels; the HTML evaluation header is not one."""
    return [
        panel["id"]
        for row in dashboard.get("rows", [])
        for panel in row.get("panels", [])
        if panel.get("mode") != "html" and "id" in panel
    ]
