"""Job dashboard generation from templates, and the admin overview."""

from .agent import DashboardAgent, DashgenConfig, DashgenConfigSection, GrafanaPusher
from .expand import count_panels, expand_dashboard, render, select_templates, substitute
from .overview import OverviewEntry, build_admin_overview, dashboard_uid, overview_dashboard
from .templates import PLACEHOLDERS, Template, TemplateSet
from .thumbnail import Sparkline

__all__ = [
    "DashboardAgent",
    "DashgenConfig",
    "DashgenConfigSection",
    "GrafanaPusher",
    "OverviewEntry",
    "PLACEHOLDERS",
    "Sparkline",
    "Template",
    "TemplateSet",
    "build_admin_overview",
    "count_panels",
    "dashboard_uid",
    "expand_dashboard",
    "overview_dashboard",
    "render",
    "select_templates",
    "substitute",
]
