"""
usermetric: send one value or event from the shell.

    usermetric --event "miniMD start" job_phase
    usermetric --value 300.5 --tag sensor=cpu0 temperature

The router URL, database and default tags come from USERMETRIC_URL, USERMETRIC_DB
and USERMETRIC_TAGS unless given as flags.
"""

import argparse
import sys
from typing import List, Optional

from ..config import parse_tag_list
from ..errors import JobmonError
from ..logs import configure_logging
from .client import ClientConfig, UserMetricClient


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usermetric", description="Send an application metric or event to the router."
    )
    parser.add_argument("name", help="Measurement name")
    payload = parser.add_mutually_exclusive_group(required=True)
    payload.add_argument("--value", type=float, help="Numeric value")
    payload.add_argument("--event", help="Event text")
    parser.add_argument("--tag", action="append", default=[], metavar="K=V",
                        help="Extra tag (repeatable)")
    parser.add_argument("--timestamp", type=int, help="Timestamp in ns (router time if omitted)")
    parser.add_argument("--url", help="Router base URL (USERMETRIC_URL)")
    parser.add_argument("--db", help="Database (USERMETRIC_DB)")
    parser.add_argument("--timeout", type=float, default=None, help="Send timeout in seconds")
    parser.add_argument("--log-level", default="WARNING")
    return parser


def cli_send(argv: Optional[List[str]] = None) -> int:
    """Send one line immediately; 0 on success, 1 on failure, 2 on usage errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        tags = parse_tag_list(",".join(args.tag))
        config = ClientConfig.load(overrides={"url": args.url, "db": args.db,
                                              "timeout": args.timeout})
    except JobmonError as e:
        parser.error(str(e))

    client = UserMetricClient(config, start_timer=False)
    try:
        if args.event is not None:
            client.add_event(args.name, args.event, tags, args.timestamp)
        else:
            client.add_value(args.name, args.value, tags, args.timestamp)
        sent = client.flush()
    except (JobmonError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        client.close(final_flush=False)

    if not sent:
        print("error: the router rejected the line", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    try:
        sys.exit(cli_send())
    except KeyboardInterrupt:
        sys.exit(1)


if __name__ == "__main__":
    main()
