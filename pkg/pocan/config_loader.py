import copy
from pathlib import Path
import sys
from typing import Any, Dict, Optional

import yaml

DEFAULTS_PATH = Path(__file__).with_name("defaults.yaml")


def load_config(config_path: Path) -> dict:
    """
    Loads a YAML settings file from the specified path and returns it as a dictionary.

    Args:
        config_path: The path to the settings file.

    Returns:
        A dictionary containing the settings. An empty file gives an empty dictionary.

    Raises:
        FileNotFoundError: If the file is not found.
        yaml.YAMLError: If the YAML file fails to parse.
    """
    if not config_path.is_file():
        print(f"Error: Configuration file not found: {config_path}", file=sys.stderr)
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        print(f"Error: Invalid YAML format in configuration file: {e}", file=sys.stderr)
        raise


def _merge(base: Dict[str, Any], override: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    for key, value in override.items():
        name = f"{prefix}{key}"
        if key not in base:
            print(f"Warning: Ignoring unknown configuration key '{name}'.", file=sys.stderr)
        elif isinstance(base[key], dict):
            if isinstance(value, dict):
                _merge(base[key], value, f"{name}.")
            else:
                print(f"Warning: Ignoring configuration key '{name}'; expected a mapping.", file=sys.stderr)
        else:
            base[key] = value
    return base


def load_defaults(override: Optional[Path] = None) -> Dict[str, Any]:
    """
    Returns the packaged defaults, with the keys of an optional user file merged over them.

    Raises:
        FileNotFoundError: If `override` does not exist.
        ValueError: If `override` does not hold a mapping.
        yaml.YAMLError: If either file fails to parse.
    """
    settings = copy.deepcopy(load_config(DEFAULTS_PATH))
    if override is None:
        return settings
    user = load_config(override)
    if not isinstance(user, dict):
        print(f"Error: Configuration file {override} must contain a mapping.", file=sys.stderr)
        raise ValueError(f"Configuration file {override} must contain a mapping")
    return _merge(settings, user)
