"""TOML configuration loading with strict key checking.

One file can carry any of the sections ``[robot]``, ``[planner]``,
``[control]``, and ``[scenario]``; unknown keys are rejected so typos
surface immediately.  Dotted ``section.key=value`` overrides are applied
after parsing, which makes parameter sweeps possible without editing
files.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .control import ControlLimits, LQIWeights, PositionGains
from .model import RobotModel
from .planner import PlanConstraints, PlanWeights
from .sim import Scenario


class ConfigError(Exception):
    """Malformed configuration file or override."""


_ROBOT_KEYS = {
    "n_links",
    "link_masses",
    "link_length",
    "tilt_beta",
    "drag_ratios",
    "lambda_max",
    "rotor_height",
    "prop_cog_distance",
    "gravity",
}
_PLANNER_KEYS = {
    "w1",
    "w2",
    "w3",
    "variance_floor",
    "alpha_min",
    "alpha_max",
    "delta_psi",
    "tolerance",
    "max_iterations",
    "alpha_tolerance",
    "tau_collapse_ratio",
}
_CONTROL_KEYS = {
    "m_diag",
    "w1_diag",
    "w2_diag",
    "kp",
    "ki",
    "kd",
    "attitude_integral_limit",
    "position_integral_limit",
}
_SCENARIO_KEYS = {
    "name",
    "duration",
    "q0",
    "psi0",
    "joint_waypoints",
    "reference",
    "control_rate",
    "planner_rate",
    "dynamics_rate",
    "disturbance_force",
    "disturbance_torque",
    "noise_std",
    "seed",
    "servo_lag_tau",
    "r0_offset",
    "max_joint_rate",
}
_SECTIONS = {
    "robot": _ROBOT_KEYS,
    "planner": _PLANNER_KEYS,
    "control": _CONTROL_KEYS,
    "scenario": _SCENARIO_KEYS,
}


def _check_keys(section, table, allowed):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in [{section}]: {sorted(unknown)}; "
            f"valid keys are {sorted(allowed)}"
        )


def load_config(path, overrides=()):
    """Parse a TOML file, apply dotted overrides, and validate all keys."""
    with open(path, "rb") as handle:
        data = tomllib.load(handle)
    for item in overrides:
        data = apply_override(data, item)
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(
            f"unknown sections {sorted(unknown)}; valid: {sorted(_SECTIONS)}"
        )
    for name, table in data.items():
        _check_keys(name, table, _SECTIONS[name])
    return data


def apply_override(data, item):
    """Apply one ``section.key=value`` override (TOML literal values)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    key_path, raw_value = item.split("=", 1)
    parts = key_path.strip().split(".")
    if len(parts) < 2:
        raise ConfigError(f"override key {key_path!r} must be section.key")
    try:
        value = tomllib.loads(f"v = {raw_value.strip()}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}") from exc
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return data


def robot_from_config(data):
    table = dict(data.get("robot", {}))
    if "link_masses" in table:
        table["link_masses"] = tuple(table["link_masses"])
    if "drag_ratios" in table:
        table["drag_ratios"] = tuple(table["drag_ratios"])
    try:
        return RobotModel(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [robot] section: {exc}") from exc


def plan_weights_from_config(data):
    table = data.get("planner", {})
    kwargs = {
        k: table[k] for k in ("w1", "w2", "w3", "variance_floor") if k in table
    }
    return PlanWeights(**kwargs)


def plan_constraints_from_config(data):
    table = data.get("planner", {})
    keys = (
        "alpha_min",
        "alpha_max",
        "delta_psi",
        "tolerance",
        "max_iterations",
        "alpha_tolerance",
        "tau_collapse_ratio",
    )
    return PlanConstraints(**{k: table[k] for k in keys if k in table})


def control_from_config(data):
    table = data.get("control", {})
    lqi_kwargs = {}
    for key in ("m_diag", "w1_diag", "w2_diag"):
        if key in table:
            lqi_kwargs[key] = tuple(table[key])
    gains_kwargs = {k: tuple(table[k]) for k in ("kp", "ki", "kd") if k in table}
    limit_kwargs = {
        k: table[k]
        for k in ("attitude_integral_limit", "position_integral_limit")
        if k in table
    }
    return (
        LQIWeights(**lqi_kwargs),
        PositionGains(**gains_kwargs),
        ControlLimits(**limit_kwargs),
    )


def scenario_from_config(data):
    table = dict(data.get("scenario", {}))
    if "joint_waypoints" in table:
        table["joint_waypoints"] = tuple(
            (float(row[0]), tuple(float(x) for x in row[1:]))
            for row in table["joint_waypoints"]
        )
    for key in ("q0", "psi0", "r0_offset", "disturbance_force", "disturbance_torque"):
        if key in table and table[key] is not None:
            table[key] = tuple(float(x) for x in table[key])
    try:
        return Scenario(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [scenario] section: {exc}") from exc


def parse_angles(text, expected=None):
    """Comma-separated angle list from the command line."""
    try:
        values = np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"cannot parse angle list {text!r}") from exc
    if expected is not None and values.shape[0] != expected:
        raise ConfigError(f"expected {expected} angles, got {values.shape[0]}")
    return values
