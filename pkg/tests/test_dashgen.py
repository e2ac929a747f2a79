"""
Tests for dashboard templates, expansion, the admin overview and the agent
"""

import json
import re

import pytest

from conftest import MINUTE, T0, make_job
from jobmon.analysis import load_analysis_config
from jobmon.analysis.evaluate import evaluate_job
from jobmon.dashgen import (
    DashboardAgent,
    DashgenConfig,
    OverviewEntry,
    Sparkline,
    Template,
    TemplateSet,
    build_admin_overview,
    count_panels,
    dashboard_uid,
    expand_dashboard,
    overview_dashboard,
    render,
    select_templates,
    substitute,
)
from jobmon.dashgen import cli
from jobmon.errors import ConfigError, UnresolvedPlaceholder
from jobmon.jobtags import TagStore
from jobmon.lineproto import Metric
from jobmon.router import RouteConfig
from jobmon.simharness.profiles import PROFILES
from jobmon.tsstore import EmbeddedStore


@pytest.fixture
def templates(template_dir):
    return TemplateSet.load(template_dir)


def _names(selected):
    return [t.name for t in selected]


def _write_job_metrics(store, job, profile="healthy", minutes=15, db="jobs", metrics=None):
    points = []
    for host in job.sorted_hosts():
        tags = {"hostname": host, "jobid": job.job_id, "user": job.user}
        for metric, baseline in PROFILES[profile].baselines.items():
            if metrics is not None and metric not in metrics:
                continue
            points.extend(Metric(metric, tags, {"value": baseline.value}, T0 + k * MINUTE)
                          for k in range(minutes))
    store.write_points(db, points)


# Templates

def test_repository_templates_load(templates):
    assert templates.dashboard.kind == "dashboard"
    assert templates.row.kind == "row"
    assert [t.name for t in templates.headers] == ["header"]
    assert templates.panel("cpu_load").scope == "host"
    assert templates.panel("net_io").scope == "job"
    assert all(not t.unknown_placeholders for t in templates.panels)


@pytest.mark.parametrize("meta", [
    {"kind": "widget"},
    {"kind": "panel", "scope": "cluster", "requires": ["x"]},
    {"kind": "panel", "scope": "host"},
    {"kind": "panel", "requires": "cpu_load"},
    {"kind": "panel", "requires": ["x"], "order": "first"},
])
def test_template_metadata_rejected(meta):
    with pytest.raises(ConfigError):
        Template.from_document("bad", {"_template": meta, "title": "x"})


def test_template_set_missing_directory(tmp_path):
    with pytest.raises(ConfigError):
        TemplateSet.load(tmp_path)


# Selection

def test_select_system_metrics_only(templates):
    selected = select_templates(["h1", "h2"], {"cpu_load", "ipc"}, templates)
    assert _names(selected) == ["header", "cpu_load", "ipc"]


def test_select_application_metric(templates):
    available = {"h1": {"cpu_load", "pressure"}, "h2": {"cpu_load"}}
    selected = select_templates(["h1", "h2"], available, templates)
    assert _names(selected) == ["header", "cpu_load", "pressure"]


def test_select_nothing_available(templates):
    assert _names(select_templates(["h1"], {}, templates)) == ["header"]
    assert _names(select_templates(["h1"], set(), templates)) == ["header"]


def test_select_ignores_hosts_outside_job(templates):
    available = {"h9": {"cpu_load"}}
    assert _names(select_templates(["h1"], available, templates)) == ["header"]


# Expansion

def test_substitute_resolves_keys_and_values():
    doc = {"{{HOST}}": ["{{ JOB_ID }} on {{HOST}}", 3]}
    assert substitute(doc, {"HOST": "h1", "JOB_ID": "j42"}) == {"h1": ["j42 on h1", 3]}


@pytest.mark.parametrize("text", ["{{NOT_A_PLACEHOLDER}}", "{{HOST}}"])
def test_substitute_unresolved(text):
    with pytest.raises(UnresolvedPlaceholder):
        substitute({"title": text}, {"JOB_ID": "j42"}, "t")


def test_host_panels_per_node(templates):
    job = make_job()
    selected = select_templates(job.sorted_hosts(), {"cpu_load", "ipc"}, templates)
    dashboard = expand_dashboard(job, templates, None, selected)

    assert count_panels(dashboard) == 1 + 4 * 2
    cpu_row = dashboard["rows"][1]
    assert cpu_row["title"] == "cpu_load"
    assert [p["title"] for p in cpu_row["panels"]] == [f"cpu_load on h{i}" for i in range(1, 5)]
    ids = [p["id"] for row in dashboard["rows"] for p in row["panels"]]
    assert ids == list(range(1, 10))
    assert "{{" not in render(dashboard)


def test_dashboard_fields(templates):
    job = make_job(end=T0 + 10 * MINUTE)
    dashboard = expand_dashboard(job, templates, None, db="u_alice")
    assert dashboard["uid"] == "job-j42"
    assert dashboard["title"] == "Job j42 (alice)"
    assert dashboard["time"] == {"from": str(T0 // 1_000_000),
                                 "to": str((T0 + 10 * MINUTE) // 1_000_000)}
    assert dashboard["annotations"]["list"][0]["datasource"] == "u_alice"
    assert dashboard["rows"][1]["panels"][0]["datasource"] == "u_alice"
    assert dashboard["description"] == "Job j42 of alice on h1|h2|h3|h4"


def test_dashboard_uid_keeps_safe_ids():
    assert dashboard_uid("j42") == "job-j42"
    assert dashboard_uid("array_7-3") == "job-array_7-3"


@pytest.mark.parametrize("job_id", ["x/../../escaped", "../../etc", "a b", "j.42", "x" * 40])
def test_dashboard_uid_sanitizes(job_id):
    uid = dashboard_uid(job_id)
    assert re.fullmatch(r"job-[A-Za-z0-9_-]+", uid)
    assert uid == dashboard_uid(job_id)


def test_dashboard_uid_distinguishes_similar_ids():
    assert dashboard_uid("x/../escaped") != dashboard_uid("x/../../escaped")


def test_dashboard_uid_overrides_template(templates):
    dashboard = expand_dashboard(make_job("x/../../escaped"), templates, None, db="jobs")
    assert dashboard["uid"] == dashboard_uid("x/../../escaped")


def test_running_job_ends_now(templates):
    dashboard = expand_dashboard(make_job(), templates, None)
    assert dashboard["time"]["to"] == "now"


def test_render_is_idempotent(templates):
    job = make_job(end=T0 + MINUTE)
    first = render(expand_dashboard(job, templates, None))
    second = render(expand_dashboard(job, templates, None))
    assert first == second
    assert render(json.loads(first)) == first


def test_bad_panel_template_skipped(templates):
    broken = Template.from_document("broken", {
        "_template": {"kind": "panel", "scope": "job", "requires": ["cpu_load"]},
        "title": "{{UNKNOWN}}",
    })
    job = make_job(hosts=("h1",))
    dashboard = expand_dashboard(job, templates, None,
                                 [templates.panel("cpu_load"), broken])
    assert len(dashboard["rows"]) == 1
    assert count_panels(dashboard) == 1


def test_bad_skeleton_aborts(templates):
    skeleton = Template.from_document("dashboard", {"_template": {"kind": "dashboard"},
                                                    "title": "{{NOPE}}"})
    broken = TemplateSet(skeleton, templates.row, templates.panels)
    with pytest.raises(UnresolvedPlaceholder):
        expand_dashboard(make_job(), broken, None)


def test_evaluation_header(templates, store):
    job = make_job(hosts=("h1", "h2"), end=T0 + 14 * MINUTE)
    _write_job_metrics(store, job)
    config = load_analysis_config()
    evaluation = evaluate_job(job, config.rules, store, tree=config.tree,
                              ceilings=config.ceilings)
    dashboard = expand_dashboard(job, templates, evaluation, [templates.panel("header")])
    (header,) = dashboard["rows"][0]["panels"]
    assert header["mode"] == "html"
    assert "cpu_idle" in header["content"]
    assert "#299c46" in header["content"]
    assert dashboard["jobmon"] == {"worst": "pass", "pattern": "no finding"}


def test_event_annotations(templates):
    dashboard = expand_dashboard(make_job(), templates, None, [], event_measurements=["job_phase"])
    names = [a["name"] for a in dashboard["annotations"]["list"]]
    assert names == ["job events", "job_phase"]
    assert "'j42'" in dashboard["annotations"]["list"][1]["query"]


# Overview

def _entry(job_id, worst=None, start=T0):
    job = make_job(job_id, hosts=("h1",), start=start)
    evaluation = None
    if worst is not None:
        store = EmbeddedStore()
        profile = "idle" if worst == "fail" else "healthy"
        _write_job_metrics(store, job, profile=profile, minutes=12)
        config = load_analysis_config()
        evaluation = evaluate_job(job, config.rules, store, now=start + 11 * MINUTE)
    return OverviewEntry(job, evaluation, panel_ids=[2, 3, 4])


def test_overview_worst_first():
    entries = [
        _entry("a", worst="pass", start=T0),
        _entry("b", worst="fail", start=T0 + 5),
        _entry("c", start=T0 + 1),
    ]
    overview = build_admin_overview(entries)
    assert [j["jobid"] for j in overview["jobs"]] == ["b", "c", "a"]
    assert overview["jobs"][0]["worst"] == "fail"
    assert overview["jobs"][0]["dashboard"] == "/d/job-b"
    assert [t["panel_id"] for t in overview["jobs"][0]["thumbnails"]] == [2, 3]


def test_overview_empty():
    overview = build_admin_overview([])
    assert overview["jobs"] == []
    dashboard = overview_dashboard(overview)
    assert dashboard["rows"][0]["panels"][0]["title"] == "0 running jobs"


def test_overview_escapes_links_and_images():
    entry = OverviewEntry(make_job('j"42', hosts=("h1",)), thumbnail='thumbs/"><b>x.svg')
    content = overview_dashboard(build_admin_overview([entry]))["rows"][0]["panels"][0]["content"]
    assert '"><b>' not in content
    assert "&quot;&gt;&lt;b&gt;x.svg" in content
    uid = dashboard_uid('j"42')
    assert f'href="/d/{uid}"' in content


# Thumbnails

def test_sparkline_exports(tmp_path):
    import numpy as np

    series = {
        "h1": (np.array([0, 10, 20]), np.array([1.0, 3.0, 2.0])),
        "h2": (np.array([0, 10, 20]), np.array([2.0, 2.0, 2.0])),
        "h3": (np.array([], dtype=np.int64), np.array([])),
    }
    sparkline = Sparkline.from_series(series, width=100, height=30)
    assert len(sparkline.traces) == 2
    for trace in sparkline.traces:
        for x, y in trace.points:
            assert 0 <= x <= 100 and 0 <= y <= 30
    sparkline.to_svg(tmp_path / "t.svg")
    sparkline.to_png(tmp_path / "t.png")
    assert (tmp_path / "t.svg").read_text().startswith("<?xml")
    assert (tmp_path / "t.png").read_bytes()[:4] == b"\x89PNG"


def test_sparkline_without_data():
    assert Sparkline.from_series({}).traces == []


# Agent

@pytest.fixture
def agent(store, templates, tmp_path, clock):
    return DashboardAgent(store, TagStore(), templates, output_dir=tmp_path / "dash",
                           clock=clock, thumbnail_format="both")


def test_agent_generates_on_start(agent, store, clock):
    job = make_job(hosts=("h1", "h2"))
    _write_job_metrics(store, job, metrics={"cpu_load", "ipc"})
    store.write_points("jobs", [
        Metric("job_phase", {"hostname": "h1", "jobid": "j42", "user": "alice"},
               {"text": "miniMD start"}, T0 + MINUTE),
        Metric("pressure", {"hostname": "h1", "jobid": "j42", "user": "alice", "tid": "0"},
               {"value": 1.41}, T0 + MINUTE),
    ])
    clock.advance(20 * MINUTE)
    agent.on_job_event("start", job)

    path = agent.dashboard_path("j42")
    dashboard = json.loads(path.read_text())
    titles = [row["title"] for row in dashboard["rows"]]
    assert titles == ["Job evaluation", "cpu_load", "ipc", "pressure"]
    assert [a["name"] for a in dashboard["annotations"]["list"]] == ["job events", "job_phase"]
    assert "{{" not in path.read_text()

    overview = json.loads((agent.output_dir / "jobmon-overview.json").read_text())
    assert "j42" in overview["rows"][0]["panels"][0]["content"]
    assert (agent.output_dir / "thumbs" / "job-j42.svg").exists()
    assert (agent.output_dir / "thumbs" / "job-j42.png").exists()


def test_agent_keeps_files_inside_output_dir(agent, store, clock, tmp_path):
    job = make_job("x/../../escaped", hosts=("h1",))
    _write_job_metrics(store, job, metrics={"cpu_load"})
    clock.advance(20 * MINUTE)
    dashboard = agent.generate(job)

    output = agent.output_dir.resolve()
    path = agent.dashboard_path(job.job_id)
    assert path.exists()
    assert path.resolve().parent == output
    assert path.stem == dashboard["uid"]
    written = [p.resolve() for p in tmp_path.rglob("*") if p.is_file()]
    assert written
    assert all(output in p.parents for p in written)
    assert not any("escaped" == p.stem for p in written)


def test_agent_end_drops_from_overview(agent, store, clock):
    job = make_job(hosts=("h1",))
    _write_job_metrics(store, job)
    agent.generate(job)
    assert [j["jobid"] for j in agent.overview()["jobs"]] == ["j42"]

    clock.advance(30 * MINUTE)
    agent.on_job_event("end", make_job(hosts=("h1",), end=T0 + 14 * MINUTE))
    assert agent.overview()["jobs"] == []
    assert agent.dashboard_path("j42").exists()


def test_agent_refresh_follows_tagstore(agent, store):
    tagstore = agent.tagstore
    tagstore.job_start(make_job("j1", hosts=("h1",)))
    tagstore.job_start(make_job("j2", user="bob", hosts=("h2",)))
    assert agent.refresh() == ["j1", "j2"]
    tagstore.job_end("j1", T0 + MINUTE)
    assert agent.refresh() == ["j2"]
    assert [j["jobid"] for j in agent.overview()["jobs"]] == ["j2"]


def test_agent_uses_user_database(store, templates, tmp_path, clock):
    route_config = RouteConfig(per_user_duplication=True, self_metrics_interval=0)
    agent = DashboardAgent(store, TagStore(), templates, output_dir=tmp_path,
                           route_config=route_config, clock=clock, thumbnails=False)
    job = make_job(hosts=("h1",))
    _write_job_metrics(store, job, db="u_alice", metrics={"cpu_load"})
    dashboard = agent.generate(job)
    assert dashboard["rows"][1]["panels"][0]["datasource"] == "u_alice"


def test_dashgen_config(tmp_path):
    path = tmp_path / "dashgen.yaml"
    path.write_text("dashgen:\n  output_dir: out\n  thumbnail_format: png\n")
    config = DashgenConfig.load(path, environ={})
    assert config.output_dir == "out"
    assert config.thumbnail_format == "png"
    with pytest.raises(ConfigError):
        DashgenConfig.load(overrides={"thumbnail_format": "gif"}, environ={})


def test_dashgen_cli(tmp_path, template_dir, capsys):
    directory = tmp_path / "store"
    store = EmbeddedStore(directory)
    tags = TagStore()
    job = make_job(hosts=("h1", "h2"))
    store.write_points("jobs", [tags.job_start(job)])
    _write_job_metrics(store, job)
    store.write_points("jobs", [tags.job_end("j42", T0 + 14 * MINUTE)])

    config = tmp_path / "dashgen.yaml"
    config.write_text(f"dashgen:\n  template_dir: {template_dir}\n  thumbnails: false\n")
    output = tmp_path / "out"
    code = cli.main(["--store", str(directory), "--config", str(config), "--all",
                     "--output", str(output), "--log-level", "ERROR"])
    assert code == 0
    assert (output / "job-j42.json").exists()
    assert (output / "jobmon-overview.json").exists()

    code = cli.main(["--store", str(directory), "--config", str(config), "--job", "nope",
                     "--output", str(output), "--log-level", "ERROR"])
    assert code == 1
    assert "unknown job" in capsys.readouterr().err
