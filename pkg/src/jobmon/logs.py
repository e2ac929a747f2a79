"""
Structured logging setup.

Every module logs through ``get_logger(__name__)`` and passes values as keyword
arguments. ``configure_logging`` is called once by each command-line entry point;
library use without it falls back to structlog's defaults.
"""

import logging
import os
import sys
from typing import Optional

import structlog


def configure_logging(level: Optional[str] = None, json: Optional[bool] = None) -> None:
    """Configure structlog and the stdlib root logger it renders through."""

    if level is None:
        level = os.environ.get("JOBMON_LOG_LEVEL", "INFO")
    if json is None:
        json = os.environ.get("JOBMON_LOG_JSON", "") in ("1", "true", "yes")

    numeric_level = getattr(logging, str(level).upper(), logging.INFO)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=numeric_level)

    renderer = (
        structlog.processors.JSONRenderer()
        if json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_logger_name,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str):
    return structlog.get_logger(name)
