"""
simharness: play a synthetic cluster scenario against a router.

    simharness run scenarios/computation_break.yaml --endpoint http://127.0.0.1:8086
    simharness run scenarios/healthy.yaml --time-scale 600 --seed 7
    simharness stream --host h1 --profile idle --duration 600
"""

import argparse
import sys
from typing import List, Optional

from ..errors import JobmonError
from ..lineproto import serialize
from ..logs import configure_logging
from .profiles import PROFILES, get_profile
from .runner import HttpTransport, run_scenario
from .scenario import DEFAULT_START_TIME, Scenario
from .streams import NS_PER_SECOND, gen_host_stream


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simharness", description="Synthetic cluster driver.")
    parser.add_argument("--log-level", default=None)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Play a scenario file")
    run.add_argument("scenario", help="Scenario file (YAML)")
    run.add_argument("--endpoint", default="http://127.0.0.1:8086", help="Router base URL")
    run.add_argument("--time-scale", type=float, default=0.0,
                     help="Scenario seconds per wall second (0: as fast as possible)")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed")

    stream = commands.add_parser("stream", help="Print one host's stream as line protocol")
    stream.add_argument("--host", required=True)
    stream.add_argument("--profile", default="healthy", choices=sorted(PROFILES))
    stream.add_argument("--cadence", type=float, default=60.0, help="Seconds")
    stream.add_argument("--duration", type=float, default=600.0, help="Seconds")
    stream.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        if args.command == "stream":
            for metric in gen_host_stream(
                args.host,
                int(args.cadence * NS_PER_SECOND),
                get_profile(args.profile),
                duration=int(args.duration * NS_PER_SECOND),
                start_time=DEFAULT_START_TIME,
                seed=args.seed,
            ):
                print(serialize(metric))
            return 0

        scenario = Scenario.load(args.scenario)
        transport = HttpTransport(args.endpoint)
        try:
            report = run_scenario(scenario, transport, args.time_scale, args.seed)
        finally:
            transport.close()
    except JobmonError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    sys.stdout.write(report.to_text())
    if report.aborted is not None:
        print(f"error: {report.aborted}", file=sys.stderr)
        return 1
    return 0 if report.ok else 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
