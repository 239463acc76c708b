from .config import (
    apply_env,
    apply_overrides,
    flatten_keys,
    load_config,
    parse_override,
    set_dotted,
)
from .error_handler import ConfigError, DGossipException, DivergenceError, StorageError
from .logger import get_module_logger

__all__ = [
    "load_config",
    "apply_overrides",
    "apply_env",
    "parse_override",
    "set_dotted",
    "flatten_keys",
    "get_module_logger",
    "DGossipException",
    "ConfigError",
    "DivergenceError",
    "StorageError",
]
