"""
Scenario runs through an in-process router into the embedded store, followed by
job evaluation and dashboard generation
"""

import json

import pytest

from conftest import MINUTE, REPO_ROOT, T0
from jobmon.analysis import (
    classify_pattern,
    compute_job_stats,
    evaluate_job,
    load_analysis_config,
)
from jobmon.dashgen import DashboardAgent, TemplateSet
from jobmon.jobtags import jobs_from_annotations
from jobmon.simharness import PROFILES, LocalTransport, Scenario, run_scenario


@pytest.fixture
def analysis():
    return load_analysis_config(REPO_ROOT / "config" / "analysis.yaml")


def _play(router, scenario_dir, name):
    scenario = Scenario.load(scenario_dir / f"{name}.yaml")
    report = run_scenario(scenario, LocalTransport(router))
    assert report.ok, report.to_dict()
    return scenario, report


def _evaluate(router, analysis, job_id):
    job = router.tagstore.get_job(job_id)
    return evaluate_job(job, analysis.rules, router.store, tree=analysis.tree,
                        ceilings=analysis.ceilings)


def test_computation_break_found_on_every_node(router, scenario_dir, analysis):
    _play(router, scenario_dir, "computation_break")
    table = _evaluate(router, analysis, "1001")

    for check in ("flops_dp_break", "mem_bw_break"):
        for host in ("h1", "h2", "h3", "h4"):
            assert table.status(check, host) == "fail", (check, host)
    breaks = [f for f in table.findings if f.rule_id == "flops_dp_break"]
    assert sorted(f.hostname for f in breaks) == ["h1", "h2", "h3", "h4"]
    for finding in breaks:
        assert finding.t_start == T0 + 25 * MINUTE
        assert finding.t_end == T0 + 36 * MINUTE
    assert table.status("cpu_idle", "h1") == "pass"


def test_healthy_job_passes(router, scenario_dir, analysis):
    _play(router, scenario_dir, "healthy")
    table = _evaluate(router, analysis, "2001")
    assert table.findings == []
    assert table.worst_status() == "pass"
    assert table.pattern == "no finding"


def test_idle_node_fails_alone(router, scenario_dir, analysis):
    _play(router, scenario_dir, "idle_node")
    table = _evaluate(router, analysis, "3001")

    assert table.status("cpu_idle", "h3") == "fail"
    for row in table.rows:
        for host in ("h1", "h2", "h4"):
            assert row.cells[host].status != "fail", (row.check, host)
    assert {f.hostname for f in table.findings} == {"h3"}
    assert table.pattern == "load imbalance"


def test_overlapping_jobs_duplicate_shared_host(router, scenario_dir):
    scenario, report = _play(router, scenario_dir, "overlapping_jobs")
    metrics = len(PROFILES["healthy"].metrics)
    health = router.health()

    assert health["lines_received"] == report.total_lines == 2 * 60 * metrics
    assert health["lines_rejected"] == 0
    # twenty ticks of h1 carry both jobs
    assert health["rows_written"] == (2 * 60 + 20) * metrics

    store = router.store
    (second,) = store.query_range("jobs", "cpu_load", {"jobid": "4002"}, 0, T0 + scenario.duration)
    assert second.key.tag_dict["hostname"] == "h1"
    assert len(second.points) == 20
    assert second.points[0].timestamp == T0 + 10 * MINUTE
    first_h1 = store.query_range("jobs", "cpu_load", {"jobid": "4001", "hostname": "h1"},
                                 0, T0 + scenario.duration)
    assert sum(len(s.points) for s in first_h1) == 60


def test_lifecycle_tagging(router):
    """Metrics are tagged exactly while the job runs"""
    scenario = Scenario.from_dict({
        "name": "lifecycle",
        "cadence": 60,
        "duration": 3600,
        "hosts": ["h1", "h2"],
        "jobs": [{"id": "77", "user": "gina", "hosts": ["h1"], "start": 600, "end": 1800}],
    })
    report = run_scenario(scenario, LocalTransport(router))
    assert report.ok

    series = router.store.query_range("jobs", "cpu_load", {"hostname": "h1"}, 0, T0 + 3600 * 10 ** 9)
    tagged = [p.timestamp for s in series if s.key.tag_dict.get("jobid") == "77" for p in s.points]
    untagged = [p.timestamp for s in series if "jobid" not in s.key.tag_dict for p in s.points]
    assert len(tagged) == 20
    assert all(T0 + 10 * MINUTE <= ts < T0 + 30 * MINUTE for ts in tagged)
    assert len(untagged) == 40
    assert not any(T0 + 10 * MINUTE <= ts < T0 + 30 * MINUTE for ts in untagged)

    other = router.store.query_range("jobs", "cpu_load", {"hostname": "h2"}, 0, T0 + 3600 * 10 ** 9)
    assert all("jobid" not in s.key.tag_dict for s in other)


def test_user_database_matches_global(dup_router, scenario_dir):
    _play(dup_router, scenario_dir, "healthy")
    store = dup_router.store
    end = T0 + 3600 * 10 ** 9
    for metric in PROFILES["healthy"].metrics:
        global_rows = store.query_range("jobs", metric, {"jobid": "2001"}, 0, end)
        user_rows = store.query_range("u_bob", metric, {"jobid": "2001"}, 0, end)
        assert [(s.key.tags, s.points) for s in global_rows] == \
            [(s.key.tags, s.points) for s in user_rows]
    assert [j.job_id for j in jobs_from_annotations(store, "u_bob")] == ["2001"]


def test_application_events_become_annotations(router, scenario_dir, tmp_path):
    agent = DashboardAgent(router.store, router.tagstore, TemplateSet.load(REPO_ROOT / "templates"),
                           output_dir=tmp_path, thumbnails=False)
    router.add_job_listener(agent.on_job_event)
    _play(router, scenario_dir, "app_level")

    dashboard = json.loads(agent.dashboard_path("5001").read_text())
    assert [a["name"] for a in dashboard["annotations"]["list"]] == ["job events", "job_phase"]
    titles = [row["title"] for row in dashboard["rows"]]
    assert "pressure" in titles
    assert "job_phase" not in titles
    (pressure,) = [row for row in dashboard["rows"] if row["title"] == "pressure"]
    assert len(pressure["panels"]) == 1

    events = router.store.query_range("jobs", "job_phase", {"jobid": "5001"}, 0,
                                      T0 + 3600 * 10 ** 9)
    texts = sorted(p.value for s in events for p in s.points)
    assert texts == ["miniMD end", "miniMD start"]
    assert agent.overview()["jobs"] == []


def test_pattern_stable_across_seeds(router):
    """A memory-bound job classifies the same way whatever the noise"""
    labels = set()
    for seed in range(10):
        job_id = f"mb{seed}"
        scenario = Scenario.from_dict({
            "name": "memory-bound",
            "cadence": 60,
            "duration": 1800,
            "seed": seed,
            "start_time": T0 + seed * 3600 * 10 ** 9,
            "hosts": ["h1", "h2"],
            "profile": "memory-bound",
            "jobs": [{"id": job_id, "user": "hana", "hosts": ["h1", "h2"], "start": 0,
                      "end": 1800}],
        })
        assert run_scenario(scenario, LocalTransport(router)).ok
        stats = compute_job_stats(router.tagstore.get_job(job_id), router.store,
                                  ceilings={"mem_bw": 60000.0, "flops_dp": 20000.0})
        labels.add(classify_pattern(stats))
    assert labels == {"memory bandwidth bound"}
