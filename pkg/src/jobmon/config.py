"""
Parameter-definition driven configuration.

Each configuration section declares its parameters once, with type, default and
bounds, and gets loading from YAML files and environment overrides for free.
"""

import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .errors import ConfigError


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML mapping from disk; an empty file yields an empty mapping."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_tag_list(text: str) -> Dict[str, str]:
    """Parse ``k=v,k2=v2`` into a dict (the USERMETRIC_TAGS format)."""
    tags: Dict[str, str] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigError(f"invalid tag '{item}', expected key=value")
        tags[key.strip()] = value.strip()
    return tags


class ConfigSection(ABC):
    """
    Base class for configuration sections.

    Subclasses must implement:
    - get_parameters(): Define the section's parameters
    """

    # YAML key holding this section inside a combined file, None for top level
    section_name: Optional[str] = None

    # parameter name -> environment variable overriding it
    env_overrides: Dict[str, str] = {}

    @abstractmethod
    def get_parameters(self) -> Dict[str, Dict[str, Any]]:
        """
        Return parameter definitions for this section.

        Format:
        {
            'param_name': {
                'type': 'int' | 'float' | 'str' | 'choice' | 'bool' | 'map' | 'list' | 'path',
                'default': value,
                'min': min_value,      # for int/float
                'max': max_value,      # for int/float
                'choices': [...],      # for choice
                'optional': True,      # None is an accepted value
                'help': 'Description'
            }
        }
        """
        pass

    def validate_parameters(self, params: Mapping[str, Any]) -> Dict[str, Any]:
        """
        Validate parameters against the definitions.

        Args:
            params: User-provided parameters

        Returns:
            Validated parameters with defaults filled in

        Raises:
            ConfigError: on unknown names, wrong types or out-of-range values
        """
        param_defs = self.get_parameters()
        unknown = set(params) - set(param_defs)
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")

        validated = {}
        for name, definition in param_defs.items():
            value = params.get(name, definition.get("default"))
            validated[name] = self._validate_one(name, value, definition)
        return validated

    def _validate_one(self, name: str, value: Any, definition: Dict[str, Any]) -> Any:
        if value is None:
            if definition.get("optional"):
                return None
            raise ConfigError(f"{name}: a value is required")

        param_type = definition.get("type")
        try:
            if param_type == "int":
                if isinstance(value, bool):
                    raise ValueError("boolean given")
                value = int(value)
            elif param_type == "float":
                value = float(value)
            elif param_type in ("str", "path"):
                value = str(value)
            elif param_type == "bool":
                if isinstance(value, str):
                    lowered = value.strip().lower()
                    if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                        raise ValueError(f"not a boolean: {value}")
                    value = lowered in ("1", "true", "yes", "on")
                else:
                    value = bool(value)
            elif param_type == "map":
                if isinstance(value, str):
                    value = parse_tag_list(value)
                if not isinstance(value, Mapping):
                    raise ValueError("expected a mapping")
                value = {str(k): str(v) for k, v in value.items()}
            elif param_type == "list":
                if isinstance(value, str):
                    value = [item.strip() for item in value.split(",") if item.strip()]
                if not isinstance(value, (list, tuple)):
                    raise ValueError("expected a list")
                value = [str(item) for item in value]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name}: {e}") from e

        if param_type in ("int", "float"):
            if "min" in definition and value < definition["min"]:
                raise ConfigError(f"{name}: {value} is below the minimum {definition['min']}")
            if "max" in definition and value > definition["max"]:
                raise ConfigError(f"{name}: {value} is above the maximum {definition['max']}")

        elif param_type == "choice":
            if value not in definition.get("choices", []):
                choices = ", ".join(str(c) for c in definition.get("choices", []))
                raise ConfigError(f"{name}: '{value}' is not one of {choices}")

        return value

    def defaults(self) -> Dict[str, Any]:
        return self.validate_parameters({})

    def load(
        self,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> Dict[str, Any]:
        """
        Merge defaults, the YAML file, environment overrides and explicit overrides,
        in that order, and validate the result.
        """
        params: Dict[str, Any] = {}
        if path is not None:
            data = load_yaml(path)
            if self.section_name is not None:
                data = data.get(self.section_name) or {}
                if not isinstance(data, dict):
                    raise ConfigError(f"{path}: section '{self.section_name}' must be a mapping")
            params.update(data)

        environ = os.environ if environ is None else environ
        for name, var in self.env_overrides.items():
            if environ.get(var):
                params[name] = environ[var]

        if overrides:
            params.update({k: v for k, v in overrides.items() if v is not None})

        return self.validate_parameters(params)
