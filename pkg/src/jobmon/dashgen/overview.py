"""
Admin overview of running jobs.

One entry per active job, worst evaluation status first, each linking to the
job dashboard and its thumbnails.
"""

import html
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

from ..analysis.evaluate import STATUS_ORDER, EvaluationTable
from ..jobtags import JobRecord
from .expand import STATUS_COLORS, dashboard_uid

OVERVIEW_UID = "jobmon-overview"
THUMBNAIL_PANELS = 2


@dataclass
class OverviewEntry:
    job: JobRecord
    evaluation: Optional[EvaluationTable] = None
    panel_ids: List[int] = field(default_factory=list)
    thumbnail: Optional[str] = None

    @property
    def worst(self) -> str:
        return self.evaluation.worst_status() if self.evaluation is not None else "nodata"

    def to_dict(self) -> Dict[str, Any]:
        uid = dashboard_uid(self.job.job_id)
        return {
            "jobid": self.job.job_id,
            "user": self.job.user,
            "nodes": len(self.job.hosts),
            "hosts": self.job.sorted_hosts(),
            "start_time": self.job.start_time,
            "worst": self.worst,
            "pattern": self.evaluation.pattern if self.evaluation is not None else None,
            "dashboard": f"/d/{uid}",
            "thumbnails": [
                {"panel_id": pid, "url": f"/d-solo/{uid}?panelId={pid}"}
                for pid in self.panel_ids[:THUMBNAIL_PANELS]
            ],
            "thumbnail_image": self.thumbnail,
        }


def build_admin_overview(entries: Iterable[OverviewEntry]) -> Dict[str, Any]:
    """Failing jobs first, then by start time and job id."""
    ordered = sorted(
        entries,
        key=lambda e: (-STATUS_ORDER.get(e.worst, 0), e.job.start_time, e.job.job_id),
    )
    return {"title": "Running jobs", "uid": OVERVIEW_UID, "jobs": [e.to_dict() for e in ordered]}


def overview_dashboard(overview: Dict[str, Any]) -> Dict[str, Any]:
    """The overview as a viewer dashboard with one HTML text panel."""
    lines = ["<table class=\"jobmon-overview\">",
             "<tr><th>job</th><th>user</th><th>nodes</th><th>status</th><th>pattern</th>"
             "<th></th></tr>"]
    for job in overview["jobs"]:
        color = STATUS_COLORS.get(job["worst"], "#808080")
        thumb = job["thumbnail_image"]
        image = f'<img src="{html.escape(thumb)}"/>' if thumb else ""
        lines.append(
            f'<tr><td><a href="{html.escape(job["dashboard"])}">'
            f'{html.escape(job["jobid"])}</a></td>'
            f'<td>{html.escape(job["user"])}</td><td>{job["nodes"]}</td>'
            f'<td style="background-color:{color}">{job["worst"]}</td>'
            f'<td>{html.escape(job["pattern"] or "")}</td><td>{image}</td></tr>'
        )
    lines.append("</table>")
    return {
        "title": overview["title"],
        "uid": overview["uid"],
        "tags": ["jobmon"],
        "time": {"from": "now-24h", "to": "now"},
        "rows": [{
            "title": "Running jobs",
            "panels": [{"id": 1, "type": "text", "mode": "html", "span": 12,
                        "title": f"{len(overview['jobs'])} running jobs",
                        "content": "".join(lines)}],
        }],
    }
