"""
Template selection and dashboard expansion.

A job dashboard is the skeleton with one header row holding the evaluation
table, then one row per selected panel template. Host-scoped templates yield
one panel per job node, job-scoped templates a single panel.
"""

import hashlib
import html
import json
import re
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Union

from ..analysis.evaluate import EvaluationTable
from ..errors import UnresolvedPlaceholder
from ..jobtags import JOB_EVENT_MEASUREMENT, JobRecord
from ..logs import get_logger
from .templates import PLACEHOLDERS, TOKEN, Template, TemplateSet

logger = get_logger(__name__)

NS_PER_MS = 1_000_000
HOST_PANELS_PER_LINE = 4
ROW_SPAN = 12

STATUS_COLORS = {"pass": "#299c46", "nodata": "#808080", "warn": "#ed8128", "fail": "#d44a3a"}

AvailableMetrics = Union[Mapping[str, Set[str]], Set[str]]

UID_SAFE = re.compile(r"[A-Za-z0-9_-]{1,32}\Z")


def dashboard_uid(job_id: str) -> str:
    """
    Dashboard uid of a job, also used as its file name. Ids outside
    ``[A-Za-z0-9_-]`` (or longer than 32 characters) are reduced to their safe
    characters plus a digest of the full id.
    """
    if UID_SAFE.match(job_id):
        return f"job-{job_id}"
    safe = re.sub(r"[^A-Za-z0-9_-]", "", job_id)[:24]
    digest = hashlib.sha1(job_id.encode("utf-8")).hexdigest()[:10]
    return f"job-{safe}-{digest}" if safe else f"job-{digest}"


def select_templates(
    hosts: Iterable[str], available_metrics: AvailableMetrics, templates: TemplateSet
) -> List[Template]:
    """
    Header templates, then every panel template whose required metrics all exist
    on at least one of ``hosts``. ``available_metrics`` maps host to metric names;
    a plain set counts as available on every host.
    """
    hosts = list(hosts)
    if isinstance(available_metrics, Mapping):
        per_host = [set(available_metrics.get(h, ())) for h in hosts]
    else:
        per_host = [set(available_metrics)] if hosts else []

    selected = list(templates.headers)
    for template in templates.panels:
        if template.scope == "header":
            continue
        if any(template.requires <= metrics for metrics in per_host):
            selected.append(template)
    return selected


def substitute(obj: Any, values: Mapping[str, str], template: str = "") -> Any:
    """
    Replace ``{{NAME}}`` tokens in every string (keys included) of ``obj``.

    Raises:
        UnresolvedPlaceholder: a token is outside the vocabulary or has no value here
    """
    if isinstance(obj, str):
        def replace(match) -> str:
            name = match.group(1)
            if name not in PLACEHOLDERS or name not in values:
                raise UnresolvedPlaceholder(
                    f"template {template or '?'}: unresolved placeholder {{{{{name}}}}}"
                )
            return values[name]
        return TOKEN.sub(replace, obj)
    if isinstance(obj, dict):
        return {substitute(k, values, template): substitute(v, values, template)
                for k, v in obj.items()}
    if isinstance(obj, list):
        return [substitute(item, values, template) for item in obj]
    return obj


def job_values(job: JobRecord, db: str) -> Dict[str, str]:
    """Placeholder values shared by every template of the job's dashboard."""
    return {
        "JOB_ID": job.job_id,
        "USER": job.user,
        "DB": db,
        "HOSTS": "|".join(job.sorted_hosts()),
        "T_START": str(job.start_time // NS_PER_MS),
        "T_END": "now" if job.end_time is None else str(job.end_time // NS_PER_MS),
    }


def evaluation_html(evaluation: EvaluationTable) -> str:
    """The evaluation table as HTML for a text panel."""
    out = ['<table class="jobmon-evaluation">', "<tr><th>check</th><th>unit</th>"]
    out.extend(f"<th>{html.escape(h)}</th>" for h in evaluation.hosts)
    out.append("</tr>")
    for row in evaluation.rows:
        out.append(f"<tr><td>{html.escape(row.check)}</td><td>{html.escape(row.unit)}</td>")
        for host in evaluation.hosts:
            cell = row.cells[host]
            color = STATUS_COLORS.get(cell.status, "#808080")
            out.append(f'<td style="background-color:{color}">{html.escape(cell.text())}</td>')
        out.append("</tr>")
    out.append("</table>")
    if evaluation.pattern is not None:
        out.append(f"<p>pattern: {html.escape(evaluation.pattern)}</p>")
    return "".join(out)


def annotations(job: JobRecord, db: str, event_measurements: Iterable[str] = ()) -> List[Dict]:
    """Annotation queries for job start/end rows and application events."""
    items = [{
        "name": "job events",
        "datasource": db,
        "enable": True,
        "iconColor": "rgba(255, 96, 96, 1)",
        "query": (f'SELECT "text" FROM "{JOB_EVENT_MEASUREMENT}" '
                  f"WHERE \"jobid\" = '{job.job_id}' AND $timeFilter"),
        "textColumn": "text",
        "tagsColumn": "event",
    }]
    for measurement in sorted(set(event_measurements)):
        items.append({
            "name": measurement,
            "datasource": db,
            "enable": True,
            "iconColor": "rgba(40, 40, 40, 1)",
            "query": (f'SELECT "text" FROM "{measurement}" '
                      f"WHERE \"jobid\" = '{job.job_id}' AND $timeFilter"),
            "textColumn": "text",
        })
    return items


def _metric_of(template: Template) -> str:
    return sorted(template.requires)[0] if template.requires else ""


def expand_panels(template: Template, job: JobRecord, values: Mapping[str, str]) -> List[Dict]:
    """Panels of one template, before ids and layout are assigned."""
    local = dict(values, METRIC=_metric_of(template))
    if template.scope != "host":
        return [substitute(template.body, local, template.name)]
    return [substitute(template.body, dict(local, HOST=host), template.name)
            for host in job.sorted_hosts()]


def expand_dashboard(
    job: JobRecord,
    templates: TemplateSet,
    evaluation: Optional[EvaluationTable],
    selected: Optional[List[Template]] = None,
    db: str = "jobs",
    event_measurements: Iterable[str] = (),
) -> Dict[str, Any]:
    """
    Build the complete dashboard document for ``job``.

    A panel template that fails to expand is logged and skipped; the skeleton or
    row template failing aborts the whole dashboard.

    Raises:
        UnresolvedPlaceholder: in the dashboard skeleton or the row template
    """
    values = job_values(job, db)
    if selected is None:
        selected = list(templates.panels)

    dashboard = substitute(templates.dashboard.body, values, templates.dashboard.name)
    rows: List[Dict[str, Any]] = []
    next_id = 1

    for template in selected:
        try:
            panels = expand_panels(template, job, values)
        except UnresolvedPlaceholder as e:
            logger.warning("template_skipped", template=template.name, jobid=job.job_id,
                           reason=str(e))
            continue

        if template.scope == "header":
            content = evaluation_html(evaluation) if evaluation is not None else ""
            for panel in panels:
                panel["mode"] = "html"
                panel["content"] = content
            title = "Job evaluation"
        else:
            title = _metric_of(template)

        row = substitute(templates.row.body, dict(values, METRIC=title), templates.row.name)
        per_line = HOST_PANELS_PER_LINE if template.scope == "host" else 1
        span = ROW_SPAN // min(per_line, max(len(panels), 1))
        for panel in panels:
            panel["id"] = next_id
            panel["span"] = span
            next_id += 1
        row["panels"] = panels
        rows.append(row)

    dashboard["uid"] = dashboard_uid(job.job_id)
    dashboard["rows"] = rows
    dashboard["time"] = {"from": values["T_START"], "to": values["T_END"]}
    dashboard["annotations"] = {"list": annotations(job, db, event_measurements)}
    if evaluation is not None:
        dashboard["jobmon"] = {"worst": evaluation.worst_status(), "pattern": evaluation.pattern}
    return dashboard


def count_panels(dashboard: Mapping[str, Any]) -> int:
    return sum(len(row.get("panels", [])) for row in dashboard.get("rows", []))


def render(dashboard: Mapping[str, Any]) -> str:
    """Canonical JSON text: the same document always renders to the same bytes."""
    return json.dumps(dashboard, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
