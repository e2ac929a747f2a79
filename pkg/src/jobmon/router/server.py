"""
HTTP service of the metrics router.

    POST /write?db=<name>[&precision=..][&u=..&p=..]   line-protocol batch
    POST /job                                           job start/end document
    GET  /health                                        counters as JSON
    GET  /ping                                          liveness probe
    GET  /subscribe?prefix=<topic prefix>               websocket bus relay
"""

import asyncio
import contextlib
from typing import Optional

from aiohttp import WSMsgType, web

from ..logs import get_logger
from .core import MetricsRouter

logger = get_logger(__name__)

ROUTER_KEY = web.AppKey("router", MetricsRouter) if hasattr(web, "AppKey") else "router"
AGENT_KEY = web.AppKey("agent", object) if hasattr(web, "AppKey") else "agent"


def _response(result) -> web.Response:
    if result.status == 204:
        return web.Response(status=204, headers=result.headers)
    return web.Response(
        status=result.status,
        text=result.body,
        content_type=result.content_type,
        headers=result.headers,
    )


async def handle_write(request: web.Request) -> web.Response:
    router: MetricsRouter = request.app[ROUTER_KEY]
    receipt_time = router.clock()
    body = await request.text()
    # authentication parameters (u, p) are accepted and ignored
    db = request.query.get("db")
    precision = request.query.get("precision")
    loop = asyncio.get_running_loop()
    result = await loop.run_in_executor(
        None, router.handle_write, db, body, receipt_time, precision
    )
    return _response(result)


async def handle_job(request: web.Request) -> web.Response:
    router: MetricsRouter = request.app[ROUTER_KEY]
    receipt_time = router.clock()
    body = await request.read()
    loop = asyncio.get_running_loop()
    result = await loop.run_in_executor(None, router.handle_job_signal, body, receipt_time)
    return _response(result)


async def handle_health(request: web.Request) -> web.Response:
    router: MetricsRouter = request.app[ROUTER_KEY]
    return web.json_response(router.health())


async def handle_ping(request: web.Request) -> web.Response:
    return web.Response(status=204)


async def handle_subscribe(request: web.Request) -> web.WebSocketResponse:
    """Relay bus messages as two text frames each: topic, then payload."""
    router: MetricsRouter = request.app[ROUTER_KEY]
    prefix = request.query.get("prefix", "")
    ws = web.WebSocketResponse()
    await ws.prepare(request)

    loop = asyncio.get_running_loop()
    ready = asyncio.Event()

    def wake():
        # called on the publishing thread
        with contextlib.suppress(RuntimeError):
            loop.call_soon_threadsafe(ready.set)

    subscription = router.bus.subscribe(prefix, notify=wake)

    async def pump():
        while not ws.closed:
            await ready.wait()
            ready.clear()
            for message in subscription.drain():
                await ws.send_str(message.topic)
                await ws.send_str(message.payload)

    pump_task = asyncio.ensure_future(pump())
    try:
        async for msg in ws:
            if msg.type in (WSMsgType.CLOSE, WSMsgType.ERROR):
                break
    finally:
        pump_task.cancel()
        with contextlib.suppress(asyncio.CancelledError, ConnectionResetError):
            await pump_task
        subscription.close()
    return ws


async def _periodic(interval: float, action, name: str):
    while True:
        await asyncio.sleep(interval)
        try:
            await asyncio.get_running_loop().run_in_executor(None, action)
        except Exception:
            logger.exception("periodic_task_failed", task=name)


async def _background(app: web.Application):
    router: MetricsRouter = app[ROUTER_KEY]
    agent = app.get(AGENT_KEY)
    router.start()

    tasks = []
    if router.config.self_metrics_interval > 0:
        tasks.append(asyncio.ensure_future(
            _periodic(router.config.self_metrics_interval, router.write_self_metrics, "self_metrics")
        ))
    if agent is not None and agent.refresh_interval > 0:
        tasks.append(asyncio.ensure_future(
            _periodic(agent.refresh_interval, agent.refresh, "dashboard_refresh")
        ))
    yield
    for task in tasks:
        task.cancel()
    for task in tasks:
        with contextlib.suppress(asyncio.CancelledError):
            await task
    router.close()


def create_app(router: MetricsRouter, agent: Optional[object] = None) -> web.Application:
    """
    Build the aiohttp application around ``router``; ``agent`` (a dashboard agent)
    is refreshed periodically when given.
    """
    app = web.Application(client_max_size=256 * 1024 * 1024)
    app[ROUTER_KEY] = router
    if agent is not None:
        app[AGENT_KEY] = agent
    app.add_routes([
        web.post("/write", handle_write),
        web.post("/job", handle_job),
        web.get("/health", handle_health),
        web.get("/ping", handle_ping),
        web.get("/subscribe", handle_subscribe),
    ])
    app.cleanup_ctx.append(_background)
    return app


def run(router: MetricsRouter, agent: Optional[object] = None) -> None:
    host, port = router.config.listen_address()
    logger.info("router_listening", host=host, port=port, backend=router.backend.get_name(),
                global_db=router.config.global_db)
    web.run_app(create_app(router, agent), host=host, port=port, print=None)
