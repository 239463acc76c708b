import copy
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

import yaml
from dotenv import load_dotenv

from .error_handler import ConfigError, StorageError

load_dotenv()

SEED_ENV_VAR = "DGOSSIP_SEED"


def load_config(file_name: str | Path = "config.yaml") -> Dict[str, Any]:
    """Read a YAML experiment config into a plain dict."""
    try:
        with open(file_name, "r") as file:
            data = yaml.safe_load(file)
    except FileNotFoundError as e:
        raise StorageError(6001, "Config file not found", str(file_name)) from e
    except yaml.YAMLError as e:
        raise ConfigError(6002, "Config file is not valid YAML", str(e)) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(6003, "Config root must be a mapping", str(file_name))
    return data


def parse_override(pair: str) -> Tuple[str, Any]:
    """Split ``a.b=value`` and parse the value as a YAML scalar/list."""
    key, sep, raw = pair.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(6004, "Override must look like KEY=VALUE", pair)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(6005, f"Cannot parse value for {key}", str(e)) from e
    return key, value


def set_dotted(tree: Dict[str, Any], key: str, value: Any) -> Dict[str, Any]:
    """Return a copy of ``tree`` with ``key`` (dotted path) set to ``value``."""
    result = copy.deepcopy(tree)
    node = result
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = {}
            node[part] = child
        if not isinstance(child, dict):
            raise ConfigError(6006, f"Cannot set {key}", f"{part} is not a section")
        node = child
    node[parts[-1]] = value
    return result


def apply_overrides(tree: Dict[str, Any], pairs: Iterable[str]) -> Dict[str, Any]:
    for pair in pairs:
        key, value = parse_override(pair)
        tree = set_dotted(tree, key, value)
    return tree


def apply_env(tree: Dict[str, Any]) -> Dict[str, Any]:
    """Apply environment overrides (currently only the seed)."""
    seed = os.getenv(SEED_ENV_VAR)
    if seed is None or not seed.strip():
        return tree
    try:
        value = int(seed)
    except ValueError as e:
        raise ConfigError(6007, f"{SEED_ENV_VAR} must be an integer", seed) from e
    return set_dotted(tree, "seed", value)


def flatten_keys(tree: Dict[str, Any], prefix: str = "") -> List[str]:
    keys = []
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        keys.append(dotted)
        if isinstance(value, dict):
            keys.extend(flatten_keys(value, f"{dotted}."))
    return keys
