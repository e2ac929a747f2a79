"""
jobmon-dashgen: generate job dashboards offline from an embedded store.

    jobmon-dashgen --store ./data --job 1234
    jobmon-dashgen --store ./data --all --output ./dashboards
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from ..errors import JobmonError
from ..jobtags import TagStore, jobs_from_annotations
from ..logs import configure_logging
from ..router.config import RouteConfig
from ..tsstore import EmbeddedStore
from .agent import DashboardAgent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jobmon-dashgen", description="Generate job dashboards from stored job data."
    )
    parser.add_argument("--store", required=True, help="Embedded store directory")
    parser.add_argument("--config", help="Dashboard generator settings (YAML)")
    parser.add_argument("--router-config", help="Router settings, for database naming")
    target = parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--job", action="append", help="Job id (repeatable)")
    target.add_argument("--all", action="store_true", help="Every job found in the store")
    parser.add_argument("--output", help="Output directory (overrides the config)")
    parser.add_argument("--log-level", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        route_config = RouteConfig.load(args.router_config, environ={})
        store = EmbeddedStore(args.store)
        tagstore = TagStore()
        jobs = jobs_from_annotations(store, route_config.global_db)
        tagstore.restore(jobs)
        agent = DashboardAgent.from_config(args.config, store, tagstore, route_config)
        if args.output:
            agent.output_dir = Path(args.output)

        known = {job.job_id: job for job in jobs}
        wanted = sorted(known) if args.all else args.job
        for job_id in wanted:
            if job_id not in known:
                print(f"error: unknown job '{job_id}'", file=sys.stderr)
                return 1
            agent.generate(known[job_id])
            print(agent.dashboard_path(job_id))
        print(agent.write_overview())
    except JobmonError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
