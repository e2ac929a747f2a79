"""
Dashboard, row and panel templates.

Templates are JSON documents with ``{{PLACEHOLDER}}`` tokens. Each carries a
``_template`` block that is stripped before expansion:

    "_template": {"kind": "panel", "scope": "host", "requires": ["cpu_load"]}

``kind`` is dashboard, row or panel. Panel ``scope`` is host (one panel per job
node), job (one panel) or header (the evaluation header, always selected).
Non-header panels name the metrics they plot in ``requires``.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Set, Union

from ..errors import ConfigError
from ..logs import get_logger

logger = get_logger(__name__)

PLACEHOLDERS = frozenset(
    ("JOB_ID", "USER", "DB", "HOSTS", "HOST", "T_START", "T_END", "METRIC")
)
TOKEN = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")

KINDS = ("dashboard", "row", "panel")
SCOPES = ("host", "job", "header")
META_KEY = "_template"


def placeholders_in(obj: Any) -> Set[str]:
    """Every placeholder name used anywhere in ``obj``, keys included."""
    found: Set[str] = set()
    if isinstance(obj, str):
        found.update(TOKEN.findall(obj))
    elif isinstance(obj, dict):
        for key, value in obj.items():
            found |= placeholders_in(key)
            found |= placeholders_in(value)
    elif isinstance(obj, list):
        for item in obj:
            found |= placeholders_in(item)
    return found


@dataclass(frozen=True)
class Template:
    name: str
    kind: str
    body: Dict[str, Any] = field(hash=False, compare=False)
    scope: str = "job"
    requires: FrozenSet[str] = frozenset()
    order: int = 0

    @property
    def placeholders(self) -> Set[str]:
        return placeholders_in(self.body)

    @property
    def unknown_placeholders(self) -> Set[str]:
        return self.placeholders - PLACEHOLDERS

    @classmethod
    def from_document(cls, name: str, doc: Any) -> "Template":
        if not isinstance(doc, dict):
            raise ConfigError(f"template {name}: top level must be an object")
        body = dict(doc)
        meta = body.pop(META_KEY, {})
        if not isinstance(meta, dict):
            raise ConfigError(f"template {name}: {META_KEY} must be an object")

        kind = meta.get("kind", "panel")
        scope = meta.get("scope", "job")
        requires = meta.get("requires", [])
        if kind not in KINDS:
            raise ConfigError(f"template {name}: kind must be one of {', '.join(KINDS)}")
        if scope not in SCOPES:
            raise ConfigError(f"template {name}: scope must be one of {', '.join(SCOPES)}")
        if not isinstance(requires, list) or not all(isinstance(m, str) for m in requires):
            raise ConfigError(f"template {name}: requires must be a list of metric names")
        if kind == "panel" and scope != "header" and not requires:
            raise ConfigError(f"template {name}: panel templates must require a metric")
        try:
            order = int(meta.get("order", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"template {name}: order must be an integer") from None

        return cls(name=meta.get("name", name), kind=kind, body=body, scope=scope,
                   requires=frozenset(requires), order=order)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Template":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read template {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"template {path} is not valid JSON: {e}") from e
        return cls.from_document(path.stem, doc)


@dataclass
class TemplateSet:
    dashboard: Template
    row: Template
    panels: List[Template] = field(default_factory=list)

    @property
    def headers(self) -> List[Template]:
        return [t for t in self.panels if t.scope == "header"]

    def panel(self, name: str) -> Template:
        for template in self.panels:
            if template.name == name:
                return template
        raise KeyError(name)

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "TemplateSet":
        """
        Load ``dashboard.json``, ``row.json`` and ``panels/*.json``.

        Raises:
            ConfigError: a file is missing, not JSON or has invalid metadata
        """
        directory = Path(directory)
        dashboard = Template.from_file(directory / "dashboard.json")
        row = Template.from_file(directory / "row.json")
        if dashboard.kind != "dashboard" or row.kind != "row":
            raise ConfigError(f"{directory}: dashboard.json and row.json have the wrong kind")

        panels = [Template.from_file(p) for p in sorted((directory / "panels").glob("*.json"))]
        names = [t.name for t in panels]
        if len(set(names)) != len(names):
            raise ConfigError(f"{directory}: duplicate panel template names")
        for template in [dashboard, row] + panels:
            if template.unknown_placeholders:
                # expansion skips the template; report it once here
                logger.warning("template_unknown_placeholders", template=template.name,
                               placeholders=sorted(template.unknown_placeholders))
        panels.sort(key=lambda t: (t.order, t.name))
        logger.info("templates_loaded", directory=str(directory), panels=len(panels))
        return cls(dashboard, row, panels)


def default_template_dir() -> Optional[Path]:
    """The repository's ``templates/`` directory when running from a checkout."""
    candidate = Path(__file__).resolve().parents[3] / "templates"
    return candidate if candidate.is_dir() else None
