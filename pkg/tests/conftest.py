"""
Shared fixtures: in-memory stores, routers on a manual clock and job builders.
"""

import asyncio
import threading
from concurrent.futures import Executor, Future
from pathlib import Path

import pytest
from aiohttp import web

from jobmon.jobtags import JobRecord, TagStore
from jobmon.router import MetricsRouter, RouteConfig
from jobmon.router.server import create_app
from jobmon.tsstore import EmbeddedStore

REPO_ROOT = Path(__file__).resolve().parent.parent
T0 = 1_500_000_000 * 1_000_000_000
MINUTE = 60 * 1_000_000_000


class ManualClock:
    """Nanosecond clock that only moves when told to."""

    def __init__(self, now: int = T0):
        self.now = now

    def __call__(self) -> int:
        return self.now

    def advance(self, ns: int) -> int:
        self.now += ns
        return self.now


class InlineExecutor(Executor):
    """Runs submitted calls immediately, so job hooks finish before the signal returns."""

    def submit(self, fn, *args, **kwargs):
        future: Future = Future()
        try:
            future.set_result(fn(*args, **kwargs))
        except Exception as e:
            future.set_exception(e)
        return future


class ServerThread:
    """Serves an aiohttp application on 127.0.0.1 from a thread with its own event loop."""

    def __init__(self, app: web.Application):
        self.app = app
        self.url = None
        self.loop = asyncio.new_event_loop()
        self._ready = threading.Event()
        self._error = None
        self._runner = None
        self._thread = threading.Thread(target=self._run, name="test-server", daemon=True)

    async def _listen(self):
        self._runner = web.AppRunner(self.app)
        await self._runner.setup()
        await web.TCPSite(self._runner, "127.0.0.1", 0).start()
        host, port = self._runner.addresses[0][:2]
        self.url = f"http://{host}:{port}"

    def _run(self):
        asyncio.set_event_loop(self.loop)
        try:
            self.loop.run_until_complete(self._listen())
        except Exception as e:
            self._error = e
            self._ready.set()
            return
        self._ready.set()
        self.loop.run_forever()
        self.loop.run_until_complete(self._runner.cleanup())
        self.loop.close()

    def start(self) -> str:
        self._thread.start()
        if not self._ready.wait(10):
            raise RuntimeError("server did not start")
        if self._error is not None:
            raise self._error
        return self.url

    def stop(self):
        self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join(10)


def make_job(job_id="j42", user="alice", hosts=("h1", "h2", "h3", "h4"), start=T0, end=None,
             **extra_tags) -> JobRecord:
    return JobRecord(job_id, user, frozenset(hosts), start, end, extra_tags)


def start_signal(job_id="j42", user="alice", hosts=("h1", "h2", "h3", "h4"), timestamp=None):
    doc = {"action": "start", "jobid": job_id, "user": user, "hosts": list(hosts)}
    if timestamp is not None:
        doc["timestamp"] = timestamp
    return doc


def end_signal(job_id="j42", timestamp=None):
    doc = {"action": "end", "jobid": job_id}
    if timestamp is not None:
        doc["timestamp"] = timestamp
    return doc


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def store():
    return EmbeddedStore()


@pytest.fixture
def tagstore():
    return TagStore()


@pytest.fixture
def route_config():
    return RouteConfig(self_metrics_interval=0)


@pytest.fixture
def router(route_config, store, clock):
    router = MetricsRouter(route_config, backend=store, clock=clock,
                           hook_executor=InlineExecutor())
    yield router
    router.close()


@pytest.fixture
def dup_router(store, clock):
    """Router with per-user duplication into ``u_<user>``."""
    config = RouteConfig(per_user_duplication=True, self_metrics_interval=0)
    router = MetricsRouter(config, backend=store, clock=clock, hook_executor=InlineExecutor())
    yield router
    router.close()


@pytest.fixture
def template_dir():
    return REPO_ROOT / "templates"


@pytest.fixture
def scenario_dir():
    return REPO_ROOT / "scenarios"


@pytest.fixture
def serve():
    """Start ``create_app(router)`` on a real socket; returns the base URL."""
    servers = []

    def start(router: MetricsRouter) -> str:
        server = ServerThread(create_app(router))
        servers.append(server)
        return server.start()

    yield start
    for server in servers:
        server.stop()
