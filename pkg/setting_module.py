# setting_module.py

"""
Configuration layer.

Environment variables come from the process or a `.env` file (python-dotenv).
Run configurations are TOML files; nested tables are flattened to dotted keys
(`[grid] n = 64` and `grid.n = 64` are the same key) and checked against the
keys each command accepts.
"""

import logging
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from dotenv import load_dotenv

from compressible_solver import CnsConfig, PressureLaw, ViscosityParams
from errors import ConfigError
from incompressible_solver import InsConfig
from spectral_core import make_grid

load_dotenv()

log = logging.getLogger(__name__)

# --- Configuration ---
THREADS_ENV = "CRITICALFLOW_THREADS"
LOG_LEVEL_ENV = "CRITICALFLOW_LOG_LEVEL"
OUTPUT_ENV = "CRITICALFLOW_OUTPUT"
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_OUTPUT = "runs"

# Keys shared by every command, with their defaults
COMMON_KEYS = {
    "grid.dim": 2,
    "grid.n": 64,
    "grid.length": 2 * math.pi,
    "mu": 1.0,
    "dt": 1e-3,
    "t_end": 1.0,
    "save_every": 10,
    "integrator": "etdrk4",
    "grading": 0,
    "init.kind": "taylor-green",
    "init.seed": 0,
    "init.v_amplitude": 1.0,
    "init.q_amplitude": 0.0,
    "init.a_amplitude": 0.0,
    "init.band": [0, 2],
}
CNS_KEYS = {
    "lambda": 8.0,
    "gamma": 2.0,
}
SWEEP_KEYS = {
    "gamma": 2.0,
    "sweep.nu_values": [10.0, 100.0, 1000.0, 10000.0],
    "sweep.seeds": [0, 1, 2],
    "sweep.output_dir": None,
    "sweep.noise_floor": 1e-8,
    "sweep.constant_C": 1.0,
    "sweep.ceiling": 1e6,
    "sweep.a_scaling": "inverse-nu",
    "sweep.resolve_layer": True,
}
ACCEPTED_KEYS = {
    "ins": COMMON_KEYS,
    "cns": {**COMMON_KEYS, **CNS_KEYS},
    "sweep": {**COMMON_KEYS, **SWEEP_KEYS},
}


def worker_threads():
    """Sweep pool size: CRITICALFLOW_THREADS, else the CPU count."""
    raw = os.getenv(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def log_level():
    name = os.getenv(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ConfigError(f"{LOG_LEVEL_ENV}={name!r} is not a logging level")
    return level


def output_root():
    return Path(os.getenv(OUTPUT_ENV, DEFAULT_OUTPUT))


def _flatten(table, prefix=""):
    flat = {}
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def settings_from_dict(raw, command):
    """Validate dotted keys for `command` and fill in defaults."""
    if command not in ACCEPTED_KEYS:
        raise ConfigError(f"unknown command {command!r}")
    accepted = ACCEPTED_KEYS[command]
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(accepted))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    settings = dict(accepted)
    settings.update(flat)
    return settings


def load_settings(path, command):
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    settings = settings_from_dict(raw, command)
    log.debug("loaded %s settings from %s", command, path)
    return settings


def _number(settings, key, kind=float):
    value = settings[key]
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    try:
        converted = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if kind is int and converted != value:
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return converted


def grid_from(settings):
    return make_grid(_number(settings, "grid.dim", int), _number(settings, "grid.n", int),
                     _number(settings, "grid.length"))


def ins_config_from(settings, grid=None):
    return InsConfig(
        grid or grid_from(settings),
        mu=_number(settings, "mu"),
        dt=_number(settings, "dt"),
        t_end=_number(settings, "t_end"),
        save_every=_number(settings, "save_every", int),
        integrator=str(settings["integrator"]),
        grading=_number(settings, "grading", int),
    )


def cns_config_from(settings, grid=None, lam=None):
    lam = _number(settings, "lambda") if lam is None else lam
    return CnsConfig(
        grid or grid_from(settings),
        ViscosityParams(_number(settings, "mu"), lam),
        PressureLaw(_number(settings, "gamma")),
        dt=_number(settings, "dt"),
        t_end=_number(settings, "t_end"),
        save_every=_number(settings, "save_every", int),
        integrator=str(settings["integrator"]),
        grading=_number(settings, "grading", int),
    )


def number_list(settings, key, kind=float):
    values = settings[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{key} must be a non-empty list, got {values!r}")
    return [_number({key: v}, key, kind) for v in values]


def flag(settings, key):
    value = settings[key]
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    return value
