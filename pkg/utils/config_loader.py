"""
Experiment configuration loader for the AH toolkit

Experiments are TOML files:

    version = 1

    [family]
    preset = "dipole"            # or an explicit [family.h.<component>] table
    normalization = "unit"
    seed = 7                     # random presets only
    amplitude = 1.0              # random presets only

    [family.h.conformal]
    "0,0" = 1.0

    [family.e]
    model = "quartic"            # "zero" or "quartic"
    amplitude = 1.0

    [grid]
    n_theta = 24
    n_phi = 48

    [solver]
    max_iterations = 30
    tolerance = 1e-9
    damping = 1e-3
    gauge = "fix-three-points"
    centering = "circumscribed"
    verify_general = false
    compare_centerings = false

    [sweep]
    r = 0.2
    r_list = [0.4, 0.3, 0.2, 0.15]
    max_workers = 1
"""

import os
import sys
import copy
import logging
from typing import Any, Dict, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Add the project root to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config
from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

NUMBER = (int, float)

SCHEMA: Dict[str, Dict[str, Any]] = {
    "family": {
        "preset": str, "normalization": str, "seed": int, "amplitude": NUMBER,
        "h": dict, "e": dict,
    },
    "grid": {"n_theta": int, "n_phi": int},
    "solver": {
        "max_iterations": int, "tolerance": NUMBER, "damping": NUMBER, "gauge": str,
        "centering": str, "verify_general": bool, "compare_centerings": bool,
    },
    "sweep": {"r": NUMBER, "r_list": list, "max_workers": int},
}
E_SCHEMA = {"model": str, "amplitude": NUMBER, "coefficients": dict}

DEFAULTS: Dict[str, Any] = {
    "version": config.CONFIG_SCHEMA_VERSION,
    "family": {"preset": "round", "normalization": "unit", "seed": 0, "amplitude": 1.0,
               "e": {"model": "zero", "amplitude": config.QUARTIC_DEFAULT_AMPLITUDE}},
    "grid": {"n_theta": config.DEFAULT_N_THETA, "n_phi": config.DEFAULT_N_PHI},
    "solver": {
        "max_iterations": config.SOLVER_MAX_ITERATIONS, "tolerance": config.SOLVER_TOLERANCE,
        "damping": config.SOLVER_DAMPING, "gauge": config.SOLVER_GAUGE,
        "centering": config.DEFAULT_CENTERING, "verify_general": config.SOLVER_VERIFY_GENERAL,
        "compare_centerings": False,
    },
    "sweep": {"r": 0.2, "r_list": list(config.DEFAULT_R_LIST), "max_workers": config.MAX_WORKERS},
}


def _check_type(where: str, value: Any, expected: Any) -> None:
    # bool is an int subclass; only accept it where a bool is expected
    if isinstance(value, bool) and expected is not bool:
        raise ConfigurationError(f"{where} has the wrong type (got a boolean)")
    if not isinstance(value, expected):
        raise ConfigurationError(f"{where} has the wrong type (got {type(value).__name__})")


def _check_section(name: str, section: Dict[str, Any], schema: Dict[str, Any]) -> None:
    for key, value in section.items():
        if key not in schema:
            raise ConfigurationError(f"Unknown key '{name}.{key}'")
        _check_type(f"'{name}.{key}'", value, schema[key])


def parse_coefficients(table: Dict[str, Any], where: str) -> Dict[str, Dict[Tuple[int, int], float]]:
    """Convert {component: {"l,m": value}} into {component: {(l, m): value}}"""
    parsed: Dict[str, Dict[Tuple[int, int], float]] = {}
    for component, entries in table.items():
        if not isinstance(entries, dict):
            raise ConfigurationError(f"'{where}.{component}' must be a table of \"l,m\" = value entries")
        parsed[component] = {}
        for key, value in entries.items():
            try:
                l, m = (int(part) for part in str(key).split(","))
            except ValueError:
                raise ConfigurationError(f"Bad harmonic index {key!r} in '{where}.{component}'")
            _check_type(f"'{where}.{component}.{key}'", value, NUMBER)
            parsed[component][(l, m)] = float(value)
    return parsed


def validate(raw: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate a raw experiment mapping and merge it over the defaults

    Args:
        raw: Parsed TOML content

    Returns:
        Resolved configuration dict
    """
    version = raw.get("version", config.CONFIG_SCHEMA_VERSION)
    if version != config.CONFIG_SCHEMA_VERSION:
        raise ConfigurationError(f"Unsupported config version {version!r}")

    resolved = copy.deepcopy(DEFAULTS)
    for name, section in raw.items():
        if name == "version":
            continue
        if name not in SCHEMA:
            raise ConfigurationError(f"Unknown section '[{name}]'")
        if not isinstance(section, dict):
            raise ConfigurationError(f"'[{name}]' must be a table")
        _check_section(name, section, SCHEMA[name])
        for key, value in section.items():
            if name == "family" and key == "e":
                _check_section("family.e", value, E_SCHEMA)
                resolved["family"]["e"].update(value)
            else:
                resolved[name][key] = value

    family = resolved["family"]
    if "h" in family:
        parse_coefficients(family["h"], "family.h")
        if "preset" not in raw.get("family", {}):
            family["preset"] = None
    if "coefficients" in family["e"]:
        parse_coefficients(family["e"]["coefficients"], "family.e.coefficients")
    for value in resolved["sweep"]["r_list"]:
        _check_type("'sweep.r_list' entry", value, NUMBER)
    return resolved


def load_experiment(path: Optional[str]) -> Dict[str, Any]:
    """
    Load and validate an experiment file (defaults only when path is None)

    Args:
        path: TOML file path

    Returns:
        Resolved configuration dict
    """
    if path is None:
        return validate({})
    if not os.path.exists(path):
        candidate = os.path.join(config.EXPERIMENTS_DIR, path)
        if not os.path.exists(candidate):
            raise ConfigurationError(f"Config file not found: {path}")
        path = candidate
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Invalid TOML in {path}: {str(e)}")
    logger.debug(f"Loaded experiment {path}")
    return validate(raw)


def apply_overrides(resolved: Dict[str, Any], grid: Optional[Tuple[int, int]] = None,
                    r: Optional[float] = None, r_list: Optional[list] = None,
                    tolerance: Optional[float] = None, seed: Optional[int] = None) -> Dict[str, Any]:
    """CLI flags take precedence over file values"""
    resolved = copy.deepcopy(resolved)
    if grid is not None:
        resolved["grid"]["n_theta"], resolved["grid"]["n_phi"] = grid
    if r is not None:
        resolved["sweep"]["r"] = r
    if r_list is not None:
        resolved["sweep"]["r_list"] = list(r_list)
    if tolerance is not None:
        resolved["solver"]["tolerance"] = tolerance
    if seed is not None:
        resolved["family"]["seed"] = seed
    return resolved
