"""
Tests for the metrics router: write path, job signals, bus, retry buffer and HTTP layer
"""

import asyncio
import json
import threading

import pytest
from aiohttp.test_utils import TestClient, TestServer

from conftest import T0, InlineExecutor, end_signal, start_signal
from jobmon.errors import ConfigError, RemoteRejected, UnknownDatabase, Unreachable
from jobmon.jobtags import JOB_EVENT_MEASUREMENT
from jobmon.lineproto import Metric, parse_batch
from jobmon.router import Bus, BusMessage, MetricsRouter, RetryBuffer, RouteConfig
from jobmon.router.config import RouteConfigSection
from jobmon.router.core import REJECTED_HEADER, SELF_MEASUREMENT
from jobmon.router.server import create_app
from jobmon.tsstore import EmbeddedStore
from jobmon.tsstore.base import StorageBackend

BATCH = "\n".join(f"cpu_load,hostname=h{i} value=0.{i}" for i in range(1, 5))


class FlakyBackend(StorageBackend):
    """Backend that fails while ``down`` and records what it stored."""

    def __init__(self):
        self.down = False
        self.reject = False
        self.stored = []

    def get_name(self):
        return "flaky"

    def write_points(self, db, metrics):
        if self.down:
            raise Unreachable("backend down")
        if self.reject:
            raise RemoteRejected("malformed")
        self.stored.append((db, list(metrics)))
        return len(metrics)


def _batch(n):
    return [Metric("m", {"hostname": "h1"}, {"value": float(n)}, T0 + n)]


# Retry buffer

def test_retry_healthy_passthrough():
    backend = FlakyBackend()
    buffer = RetryBuffer(backend, capacity=4)
    buffer.submit("jobs", _batch(1))
    assert len(buffer) == 0
    assert buffer.delivered_batches == 1


def test_retry_delivers_in_order_after_outage():
    backend = FlakyBackend()
    buffer = RetryBuffer(backend, capacity=4)
    backend.down = True
    for n in range(3):
        buffer.submit("jobs", _batch(n))
    assert len(buffer) == 3
    assert not buffer.healthy

    backend.down = False
    assert buffer.flush_with_retry() == 3
    assert [metrics[0].fields["value"] for _, metrics in backend.stored] == [0.0, 1.0, 2.0]
    assert buffer.healthy
    assert buffer.dropped_batches == 0


def test_retry_overflow_drops_oldest():
    backend = FlakyBackend()
    buffer = RetryBuffer(backend, capacity=2)
    backend.down = True
    for n in range(3):
        buffer.submit("jobs", _batch(n))
    assert buffer.dropped_batches == 1
    assert buffer.dropped_lines == 1

    backend.down = False
    buffer.flush_with_retry()
    assert [metrics[0].fields["value"] for _, metrics in backend.stored] == [1.0, 2.0]


def test_retry_rejected_batch_dropped():
    backend = FlakyBackend()
    backend.reject = True
    buffer = RetryBuffer(backend, capacity=2)
    buffer.submit("jobs", _batch(1))
    assert len(buffer) == 0
    assert buffer.rejected_batches == 1
    assert buffer.dropped_batches == 1


def test_retry_unstorable_batch_does_not_block_queue():
    buffer = RetryBuffer(EmbeddedStore(), capacity=4)
    buffer.submit("u_alice@lab", _batch(1))
    buffer.submit("jobs", _batch(2))
    assert len(buffer) == 0
    assert buffer.healthy
    assert buffer.dropped_batches == 1
    assert buffer.dropped_lines == 1
    assert buffer.delivered_batches == 1
    assert buffer.backend.row_count("jobs") == 1


def test_retry_drops_unknown_database_after_outage():
    class MissingDatabase(FlakyBackend):
        def write_points(self, db, metrics):
            if db == "gone":
                raise UnknownDatabase(db)
            return super().write_points(db, metrics)

    backend = MissingDatabase()
    buffer = RetryBuffer(backend, capacity=4)
    backend.down = True
    buffer.submit("gone", _batch(1))
    buffer.submit("jobs", _batch(2))
    backend.down = False
    assert buffer.flush_with_retry() == 1
    assert [db for db, _ in backend.stored] == ["jobs"]
    assert len(buffer) == 0


def test_retry_background_thread():
    backend = FlakyBackend()
    buffer = RetryBuffer(backend, capacity=4, inline=False)
    buffer.start(retry_interval=0.01)
    try:
        buffer.submit("jobs", _batch(1))
    finally:
        buffer.stop()
    assert len(backend.stored) == 1


def test_retry_capacity_validated():
    with pytest.raises(ValueError):
        RetryBuffer(FlakyBackend(), capacity=0)


# Bus

def test_bus_prefix_fanout():
    bus = Bus(queue_size=10)
    metrics = bus.subscribe("metrics.")
    meta = bus.subscribe("meta.")
    everything = bus.subscribe("")
    assert bus.publish(BusMessage("metrics.jobs", "m v=1")) == 2
    assert [m.topic for m in metrics.drain()] == ["metrics.jobs"]
    assert meta.drain() == []
    assert len(everything.drain()) == 1


def test_bus_no_subscribers_is_noop():
    bus = Bus()
    assert bus.publish(BusMessage("metrics.jobs", "m v=1")) == 0
    assert not bus.has_subscribers()


def test_bus_slow_subscriber_dropped_from():
    bus = Bus(queue_size=2)
    slow = bus.subscribe("")
    for n in range(5):
        bus.publish(BusMessage("metrics.jobs", str(n)))
    assert [m.payload for m in slow.drain()] == ["0", "1"]
    assert slow.dropped == 3
    assert bus.dropped == 3


def test_bus_unsubscribe():
    bus = Bus()
    subscription = bus.subscribe("")
    subscription.close()
    assert not bus.has_subscribers()
    assert subscription.get(timeout=0.01) is None


def test_bus_message_frames():
    assert BusMessage("meta.job_start", "{}").frames() == [b"meta.job_start", b"{}"]


# Configuration

def test_route_config_defaults():
    config = RouteConfig.load(environ={})
    assert config.global_db == "jobs"
    assert config.backend == "embedded"
    assert config.listen_address() == ("127.0.0.1", 8086)


def test_route_config_env_implies_forward():
    config = RouteConfig.load(environ={"JOBMON_BACKEND_URL": "http://tsdb:8086"})
    assert config.backend == "forward"
    assert config.backend_url == "http://tsdb:8086"


def test_route_config_file_and_overrides(tmp_path):
    path = tmp_path / "router.yaml"
    path.write_text("router:\n  per_user_duplication: true\n  listen: 0.0.0.0:9000\n")
    config = RouteConfig.load(path, {"global_db": "cluster"}, environ={})
    assert config.per_user_duplication
    assert config.global_db == "cluster"
    assert config.user_db("alice") == "u_alice"


@pytest.mark.parametrize("params", [
    {"backend": "forward"},
    {"listen": "nowhere"},
    {"per_user_duplication": True, "user_db_pattern": "users"},
])
def test_route_config_invalid(params):
    with pytest.raises(ConfigError):
        RouteConfig(**params)


def test_route_config_unknown_key(tmp_path):
    path = tmp_path / "router.yaml"
    path.write_text("router:\n  colour: blue\n")
    with pytest.raises(ConfigError):
        RouteConfigSection().load(path, environ={})


# Write path

def test_write_unmanaged_host_untagged(router, store):
    assert router.handle_write("jobs", BATCH).status == 204
    series = store.query_range("jobs", "cpu_load", {}, 0, T0 + 1)
    assert len(series) == 4
    assert all("jobid" not in s.key.tag_dict for s in series)
    assert all(s.points[0].timestamp == T0 for s in series)


def test_write_during_job_tagged(router, store):
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", BATCH)
    series = store.query_range("jobs", "cpu_load", {"jobid": "j42"}, 0, T0 + 1)
    assert sorted(s.key.tag_dict["hostname"] for s in series) == ["h1", "h2", "h3", "h4"]
    assert all(s.key.tag_dict["user"] == "alice" for s in series)


def test_write_keeps_sender_timestamp(router, store):
    router.handle_write("jobs", "m,hostname=h1 v=1 1000")
    (series,) = store.query_range("jobs", "m", {}, 0, 2000)
    assert series.points[0].timestamp == 1000


def test_write_precision(router, store):
    router.handle_write("jobs", "m,hostname=h1 v=1 2", precision="s")
    (series,) = store.query_range("jobs", "m", {}, 0, 3_000_000_000)
    assert series.points[0].timestamp == 2_000_000_000


def test_write_duplicates_into_user_db(dup_router, store):
    dup_router.handle_job_signal(start_signal())
    dup_router.handle_write("jobs", BATCH + "\ncpu_load,hostname=h9 value=1")
    tagged = store.row_count("jobs", "cpu_load", {"jobid": "j42"})
    assert tagged == 4
    assert store.row_count("u_alice", "cpu_load") == tagged
    global_rows = store.query_range("jobs", "cpu_load", {"jobid": "j42"}, 0, T0 + 1)
    user_rows = store.query_range("u_alice", "cpu_load", {}, 0, T0 + 1)
    assert [(s.key.tags, s.points) for s in global_rows] == [(s.key.tags, s.points)
                                                             for s in user_rows]


def test_no_user_db_without_duplication(router, store):
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", BATCH)
    assert not store.has_database("u_alice")


def test_write_partial_batch(router, store):
    result = router.handle_write("jobs", "a,hostname=h1 v=1\nbroken\nb,hostname=h1 v=2")
    assert result.status == 204
    assert result.headers[REJECTED_HEADER] == "1"
    assert store.row_count("jobs") == 2
    health = router.health()
    assert health["lines_received"] == 3
    assert health["lines_rejected"] == 1
    assert health["lines_accepted"] == 2


def test_write_fully_malformed(router, store):
    result = router.handle_write("jobs", "broken\nalso broken")
    assert result.status == 400
    assert "line 0" in result.body and "line 1" in result.body
    assert not store.has_database("jobs")


def test_write_empty_body(router):
    assert router.handle_write("jobs", "").status == 204


@pytest.mark.parametrize("db", [None, "", "../etc"])
def test_write_needs_valid_db(router, db):
    assert router.handle_write(db, BATCH).status == 400


def test_write_conservation_with_overlap(router, store):
    """Rows written equal accepted lines times the jobs on their host"""
    router.handle_job_signal(start_signal("j1", hosts=("h1", "h2")))
    router.handle_job_signal(start_signal("j2", user="bob", hosts=("h1",)))
    router.handle_write("jobs", BATCH)
    health = router.health()
    assert health["lines_accepted"] == 4
    assert health["rows_written"] == 5
    assert store.row_count("jobs", "cpu_load") == 5


# Job signals

def test_start_signal_stores_annotation(router, store):
    result = router.handle_job_signal(start_signal())
    assert result.status == 200
    assert json.loads(result.body) == {"status": "ok", "action": "start", "jobid": "j42"}
    (series,) = store.query_range("jobs", JOB_EVENT_MEASUREMENT, {"jobid": "j42"}, 0, T0 + 1)
    assert {p.field: p.value for p in series.points}["text"] == "j42 start"


def test_signal_accepts_json_text(router):
    assert router.handle_job_signal(json.dumps(start_signal())).status == 200


def test_end_before_start_rejected(router):
    result = router.handle_job_signal(end_signal())
    assert result.status == 400
    assert "UnknownJob" in result.body


def test_duplicate_start_rejected(router):
    router.handle_job_signal(start_signal())
    result = router.handle_job_signal(start_signal())
    assert result.status == 400
    assert "DuplicateJob" in result.body
    assert router.health()["signals_rejected"] == 1


def test_invalid_signal_json(router):
    assert router.handle_job_signal(b"{not json").status == 400


def test_user_without_valid_database_rejected(dup_router, store):
    result = dup_router.handle_job_signal(start_signal(user="alice@lab"))
    assert result.status == 400
    assert "InvalidJob" in result.body
    assert dup_router.tagstore.active_jobs() == []

    assert dup_router.handle_write("jobs", "cpu_load,hostname=h1 value=1").status == 204
    assert store.row_count("jobs", "cpu_load") == 1
    assert len(dup_router.buffer) == 0
    assert dup_router.health()["status"] == "ok"


@pytest.mark.parametrize("changes", [
    {"jobid": "j42\nm v=1"},
    {"user": "alice\nbob"},
    {"hosts": ["h1", "h2\r"]},
    {"tags": {"project": "a\nb"}},
    {"tags": {"pro\nject": "a"}},
])
def test_signal_with_line_break_rejected(router, store, changes):
    doc = start_signal()
    doc.update(changes)
    result = router.handle_job_signal(doc)
    assert result.status == 400
    assert "InvalidJob" in result.body
    assert router.tagstore.active_jobs() == []

    router.handle_write("jobs", "cpu_load,hostname=h1 value=1")
    assert store.row_count("jobs", "cpu_load") == 1
    assert len(router.buffer) == 0


def test_job_lifecycle_tagging(router, store, clock):
    """Metrics before start and after end stay untagged"""
    router.handle_write("jobs", "cpu_load,hostname=h1 value=1")
    clock.advance(10)
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", "cpu_load,hostname=h1 value=2")
    clock.advance(10)
    router.handle_job_signal(end_signal())
    clock.advance(10)
    router.handle_write("jobs", "cpu_load,hostname=h1 value=3")

    tagged = store.query_range("jobs", "cpu_load", {"jobid": "j42"}, 0, T0 + 100)
    assert [p.value for s in tagged for p in s.points] == [2.0]
    assert store.row_count("jobs", "cpu_load") == 3


def test_job_listeners_called(router):
    events = []
    router.add_job_listener(lambda event, job: events.append((event, job.job_id, job.is_running)))
    router.handle_job_signal(start_signal())
    router.handle_job_signal(end_signal())
    assert events == [("start", "j42", True), ("end", "j42", False)]


def test_failing_listener_does_not_break_signal(router):
    def boom(event, job):
        raise RuntimeError("listener failed")

    router.add_job_listener(boom)
    assert router.handle_job_signal(start_signal()).status == 200


def test_jobs_recovered_on_restart(tmp_path, clock):
    config = RouteConfig(store_dir=str(tmp_path), self_metrics_interval=0)
    first = MetricsRouter(config, clock=clock, hook_executor=InlineExecutor())
    first.handle_job_signal(start_signal())
    first.close()

    second = MetricsRouter(config, clock=clock, hook_executor=InlineExecutor())
    assert [j.job_id for j in second.tagstore.active_jobs("h1")] == ["j42"]
    second.handle_write("jobs", BATCH)
    assert second.store.row_count("jobs", "cpu_load", {"jobid": "j42"}) == 4
    second.close()


# Bus integration

def test_subscriber_sees_stored_rows(router, store):
    subscription = router.bus.subscribe("metrics.")
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", BATCH)
    (message,) = subscription.drain()
    assert message.topic == "metrics.jobs"
    published, errors = parse_batch(message.payload)
    assert errors == []
    stored = store.query_range("jobs", "cpu_load", {}, 0, T0 + 1)
    assert sorted(m.tags["hostname"] for m in published) == ["h1", "h2", "h3", "h4"]
    assert len(published) == sum(len(s.points) for s in stored)


def test_start_published_before_tagged_metrics(router):
    subscription = router.bus.subscribe("")
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", BATCH)
    topics = [m.topic for m in subscription.drain()]
    assert topics == ["meta.job_start", "metrics.jobs"]


def test_start_precedes_tagged_metrics_under_concurrent_writes(router):
    subscription = router.bus.subscribe("", maxsize=100_000)
    stop = threading.Event()
    writing = threading.Event()

    def writer():
        for _ in range(20_000):
            if stop.is_set():
                break
            router.handle_write("jobs", "cpu_load,hostname=h1 value=1")
            writing.set()

    thread = threading.Thread(target=writer)
    thread.start()
    assert writing.wait(5)
    assert router.handle_job_signal(start_signal()).status == 200
    router.handle_write("jobs", "cpu_load,hostname=h1 value=2")
    stop.set()
    thread.join(10)

    topics = []
    for message in subscription.drain():
        if message.topic == "meta.job_start":
            topics.append("start")
        elif "jobid=j42" in message.payload:
            topics.append("tagged")
    assert topics[0] == "start"
    assert topics.count("start") == 1
    assert "tagged" in topics


def test_bus_notifies_on_queued_messages_only():
    bus = Bus(queue_size=1)
    calls = []
    bus.subscribe("metrics.", notify=lambda: calls.append(1))
    bus.publish(BusMessage("metrics.jobs", "a"))
    bus.publish(BusMessage("metrics.jobs", "b"))
    bus.publish(BusMessage("meta.job_start", "{}"))
    assert calls == [1]


def test_bus_disabled(store, clock):
    config = RouteConfig(bus_enabled=False, self_metrics_interval=0)
    router = MetricsRouter(config, backend=store, clock=clock, hook_executor=InlineExecutor())
    subscription = router.bus.subscribe("")
    router.handle_job_signal(start_signal())
    router.handle_write("jobs", BATCH)
    assert subscription.drain() == []


# Forward backend outage through the router

def test_router_buffers_while_backend_down(clock):
    backend = FlakyBackend()
    config = RouteConfig(buffer_capacity=2, self_metrics_interval=0)
    router = MetricsRouter(config, backend=backend, clock=clock, hook_executor=InlineExecutor())
    backend.down = True
    for n in range(3):
        assert router.handle_write("jobs", f"m,hostname=h1 v={n}").status == 204
    health = router.health()
    assert health["status"] == "degraded"
    assert health["batches_dropped"] == 1
    assert health["batches_buffered"] == 2

    backend.down = False
    router.buffer.flush_with_retry()
    assert [m[0].fields["v"] for _, m in backend.stored] == [1.0, 2.0]
    assert router.health()["status"] == "ok"


def test_self_metric(router, store):
    router.handle_write("jobs", BATCH)
    router.write_self_metrics()
    (series,) = store.query_range("jobs", SELF_MEASUREMENT, {}, 0, T0 + 1)
    values = {p.field: p.value for p in series.points}
    assert values["lines_accepted"] == 4


# HTTP layer

def _serve(router, scenario):
    async def main():
        client = TestClient(TestServer(create_app(router)))
        await client.start_server()
        try:
            return await scenario(client)
        finally:
            await client.close()
    return asyncio.run(main())


def test_http_write_and_health(router, store):
    async def scenario(client):
        response = await client.post("/write", params={"db": "jobs"}, data=BATCH)
        assert response.status == 204
        response = await client.post("/write", params={"db": "jobs", "u": "x", "p": "y"},
                                     data="a,hostname=h1 v=1\nbroken")
        assert response.status == 204
        assert response.headers[REJECTED_HEADER] == "1"
        response = await client.post("/write", params={"db": "jobs"}, data="broken")
        assert response.status == 400
        assert "line 0" in await response.text()
        response = await client.get("/health")
        return await response.json()

    health = _serve(router, scenario)
    assert health["lines_accepted"] == 5
    assert health["lines_rejected"] == 2
    assert store.row_count("jobs", "cpu_load") == 4


def test_http_job_signals(router):
    async def scenario(client):
        started = await client.post("/job", json=start_signal())
        again = await client.post("/job", json=start_signal())
        ended = await client.post("/job", json=end_signal())
        unknown = await client.post("/job", json=end_signal("nope"))
        return started.status, again.status, ended.status, unknown.status

    assert _serve(router, scenario) == (200, 400, 200, 400)


def test_http_ping(router):
    async def scenario(client):
        response = await client.get("/ping")
        return response.status

    assert _serve(router, scenario) == 204


def test_http_subscribe_relays_bus(router):
    async def scenario(client):
        ws = await client.ws_connect("/subscribe", params={"prefix": "meta."})
        # give the handler a moment to register its subscription
        for _ in range(50):
            if router.bus.has_subscribers("meta."):
                break
            await asyncio.sleep(0.01)
        await client.post("/job", json=start_signal())
        topic = await ws.receive_str(timeout=5)
        payload = await ws.receive_str(timeout=5)
        await ws.close()
        return topic, json.loads(payload)

    topic, payload = _serve(router, scenario)
    assert topic == "meta.job_start"
    assert payload["jobid"] == "j42"
    assert payload["hosts"] == ["h1", "h2", "h3", "h4"]


class GatedBackend(StorageBackend):
    """Blocks every write until ``release`` is set."""

    def __init__(self):
        self.waiting = threading.Event()
        self.release = threading.Event()
        self.timed_out = False

    def get_name(self):
        return "gated"

    def write_points(self, db, metrics):
        self.waiting.set()
        if not self.release.wait(5):
            self.timed_out = True
        return len(metrics)


def test_http_signal_leaves_event_loop_free(clock):
    backend = GatedBackend()
    router = MetricsRouter(RouteConfig(self_metrics_interval=0), backend=backend, clock=clock,
                           hook_executor=InlineExecutor())

    async def scenario(client):
        signal = asyncio.ensure_future(client.post("/job", json=start_signal()))
        for _ in range(500):
            if backend.waiting.is_set():
                break
            await asyncio.sleep(0.01)
        ping = await client.get("/ping")
        backend.release.set()
        response = await signal
        return ping.status, response.status

    assert _serve(router, scenario) == (204, 200)
    assert not backend.timed_out


def test_http_many_subscribers_do_not_stall_writes(router, store):
    subscribers = 40

    async def scenario(client):
        sockets = [await client.ws_connect("/subscribe", params={"prefix": "metrics."})
                   for _ in range(subscribers)]
        for _ in range(200):
            if len(router.bus._subscribers) == subscribers:
                break
            await asyncio.sleep(0.01)
        response = await asyncio.wait_for(
            client.post("/write", params={"db": "jobs"}, data=BATCH), timeout=5
        )
        topics = [await ws.receive_str(timeout=5) for ws in sockets]
        for ws in sockets:
            await ws.close()
        return response.status, topics

    status, topics = _serve(router, scenario)
    assert status == 204
    assert topics == ["metrics.jobs"] * subscribers
    assert store.row_count("jobs", "cpu_load") == 4
