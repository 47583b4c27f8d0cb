"""Log-conductivity identification on a 2-d confined aquifer.

Fields are (ny, nx) numpy arrays. Scenario configs are plain dicts using the
same keys as the JSON config files.
"""

import json
import os

from ._assim import (
    ConfigError,
    Forest,
    NumericalError,
    __version__,
    difference_count,
    enkf_update,
    fit_forest,
    localization_weight,
    reference_field,
    solve_heads,
)
from . import _assim


def default_config():
    """Every scenario key with its default value."""
    return json.loads(_assim.default_config_json())


def normalize_config(config):
    """Validated copy of `config` with defaults filled in. Raises ConfigError."""
    return json.loads(_assim.normalize_config_json(json.dumps(config)))


def run_scenario(config, out_dir, threads=1):
    """Runs one scenario and writes its CSV outputs and manifest to out_dir.

    `config` is a dict or a path to a JSON config. Returns the exit code
    (0 ok, 2 config error, 3 numerical failure).
    """
    if isinstance(config, (str, os.PathLike)):
        with open(config) as f:
            config = json.load(f)
    return _assim.run_scenario(json.dumps(config), os.fspath(out_dir), threads)


__all__ = [
    "ConfigError",
    "Forest",
    "NumericalError",
    "__version__",
    "default_config",
    "difference_count",
    "enkf_update",
    "fit_forest",
    "localization_weight",
    "normalize_config",
    "reference_field",
    "run_scenario",
    "solve_heads",
]
