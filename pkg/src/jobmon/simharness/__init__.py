"""Synthetic cluster: node metric streams, job scripts and anomalies."""

from .profiles import PROFILES, MetricBaseline, Profile, get_profile
from .runner import (
    HttpTransport,
    LocalTransport,
    ScenarioReport,
    Transport,
    run_scenario,
    signal_schedule,
)
from .scenario import DEFAULT_START_TIME, Scenario, ScriptedJob
from .streams import Anomaly, AppEvent, AppSeries, gen_host_stream, host_ticks

__all__ = [
    "Anomaly",
    "AppEvent",
    "AppSeries",
    "DEFAULT_START_TIME",
    "HttpTransport",
    "LocalTransport",
    "MetricBaseline",
    "PROFILES",
    "Profile",
    "Scenario",
    "ScenarioReport",
    "ScriptedJob",
    "Transport",
    "gen_host_stream",
    "get_profile",
    "host_ticks",
    "run_scenario",
    "signal_schedule",
]
