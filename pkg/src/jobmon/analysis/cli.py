"""
jobmon-analyze: evaluate jobs offline from an embedded store directory.

    jobmon-analyze --store ./data --job 1234
    jobmon-analyze --store ./data --job 1234 --json
    jobmon-analyze --store ./data --list
"""

import argparse
import json
import sys
from typing import List, Optional

from ..errors import JobmonError
from ..jobtags import jobs_from_annotations
from ..logs import configure_logging
from ..tsstore import EmbeddedStore
from .config import load_analysis_config
from .evaluate import compute_job_stats, evaluate_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jobmon-analyze", description="Evaluate jobs stored by the metrics router."
    )
    parser.add_argument("--store", required=True, help="Embedded store directory")
    parser.add_argument("--db", default="jobs", help="Database holding job metrics")
    parser.add_argument("--config", help="Analysis rules and decision tree (YAML)")
    target = parser.add_mutually_exclusive_group(required=True)
    target.add_argument("--job", help="Job id to evaluate")
    target.add_argument("--list", action="store_true", help="List known jobs")
    parser.add_argument("--json", action="store_true", help="Print the JSON document")
    parser.add_argument("--stats", action="store_true", help="Also print job statistics")
    parser.add_argument("--log-level", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = load_analysis_config(args.config)
        store = EmbeddedStore(args.store)
        jobs = {job.job_id: job for job in jobs_from_annotations(store, args.db)}

        if args.list:
            for job in sorted(jobs.values(), key=lambda j: j.start_time):
                state = "running" if job.is_running else "ended"
                print(f"{job.job_id}\t{job.user}\t{state}\t{','.join(job.sorted_hosts())}")
            return 0

        job = jobs.get(args.job)
        if job is None:
            print(f"error: unknown job '{args.job}'", file=sys.stderr)
            return 1

        table = evaluate_job(job, config.rules, store, args.db, config.tree, config.ceilings)
        if args.json:
            doc = table.to_dict()
            if args.stats:
                doc["stats"] = compute_job_stats(job, store, args.db, ceilings=config.ceilings)
            print(json.dumps(doc, indent=2, sort_keys=True))
        else:
            sys.stdout.write(table.to_text())
            if args.stats:
                stats = compute_job_stats(job, store, args.db, ceilings=config.ceilings)
                for name in sorted(stats):
                    print(f"{name:28s} {stats[name]:.6g}")
    except JobmonError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
