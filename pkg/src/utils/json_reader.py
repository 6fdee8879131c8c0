"""JSON reader utility for loading run configuration files."""

import json
import os
from typing import Any, Dict

from ..errors import ConfigurationError


def load_run_config(config_path: str) -> Dict[str, Any]:
    """
    Load a run configuration from a JSON file.

    Keys use the long flag names with underscores (``t_end``, ``initial_state``,
    ``omega_over_lambda`` ...). A nested ``sweep`` object may hold ``parameter``,
    ``start``, ``stop`` and ``points``.

    Returns:
        Dict[str, Any]: Dictionary with the configuration values

    Raises:
        FileNotFoundError: If the config file doesn't exist
        ConfigurationError: If the JSON is malformed or not an object
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Run configuration file not found at: {config_path}")

    with open(config_path, "r", encoding="utf-8") as file:
        try:
            data = json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON in {config_path}: {e}", field="config") from e

    if not isinstance(data, dict):
        raise ConfigurationError(f"{config_path} must contain a JSON object", field="config")

    sweep = data.pop("sweep", None)
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigurationError("'sweep' must be an object", field="sweep")
        for key, value in sweep.items():
            data[f"sweep_{key}"] = value
    return data
