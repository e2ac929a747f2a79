"""
jobmon-router: run the metrics router.

    jobmon-router --config config/router.yaml
    JOBMON_BACKEND_URL=http://tsdb:8086 jobmon-router --listen 0.0.0.0:8090
"""

import argparse
import sys
from typing import List, Optional

from ..dashgen import DashboardAgent
from ..errors import JobmonError
from ..logs import configure_logging, get_logger
from . import server
from .config import RouteConfig
from .core import MetricsRouter

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jobmon-router", description="Job-aware metrics router."
    )
    parser.add_argument("--config", help="Router settings (YAML)")
    parser.add_argument("--listen", help="host:port to listen on (JOBMON_LISTEN)")
    parser.add_argument("--store-dir", help="Embedded store directory (JOBMON_STORE_DIR)")
    parser.add_argument("--backend-url", help="Forward to this time-series database instead")
    parser.add_argument("--dashgen-config", help="Generate dashboards with these settings")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-json", action="store_true", help="Log JSON lines")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, json=args.log_json or None)

    overrides = {
        "listen": args.listen,
        "store_dir": args.store_dir,
        "backend_url": args.backend_url,
        "backend": "forward" if args.backend_url else None,
        "dashgen_config": args.dashgen_config,
    }
    try:
        config = RouteConfig.load(args.config, overrides)
        router = MetricsRouter(config)
        agent = None
        if config.dashgen_config:
            if router.store is None:
                raise JobmonError("dashboard generation needs the embedded backend")
            agent = DashboardAgent.from_config(
                config.dashgen_config, router.store, router.tagstore, config
            )
            router.add_job_listener(agent.on_job_event)
    except JobmonError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    server.run(router, agent)
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
