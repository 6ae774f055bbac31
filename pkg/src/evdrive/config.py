"""Dataclass configuration for every tunable of the simulator and agent.

Each dataclass maps onto one TOML section of a scenario file. Values not
given in a file keep the defaults below.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli

DT = 0.05  # fixed control/simulation step, 20 Hz


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicsConfig:
    a_max: float = 3.0  # m/s^2 at full throttle
    b_max: float = 8.0  # m/s^2 at full brake
    delta_max_deg: float = 35.0
    wheelbase: float = 2.9
    c_drag: float = 0.05  # 1/s
    dt: float = DT


@dataclass(frozen=True)
class ControlConfig:
    lat_kp: float = 1.0
    lat_ki: float = 0.05
    lat_kd: float = 0.2
    lon_kp: float = 0.5
    lon_ki: float = 0.1
    lon_kd: float = 0.05
    i_clamp: float = 2.0
    k_curv: float = 1.5
    min_curve_factor: float = 0.3
    d_min: float = 4.0
    d_max: float = 50.0
    hard_stop_speed: float = 0.1


@dataclass(frozen=True)
class SafetyConfig:
    v_max: float = 6.5
    d_buffer: float = 2.5  # gate buffer on the min-over-horizons clearance
    opt_buffer: float = 2.0  # buffer inside the desired-speed optimizer
    horizons: tuple[float, ...] = (0.0, 0.5, 0.75, 1.0, 1.5, 2.0)
    d_free: float = 100.0
    margin: float = 0.2
    plan_length: float = 40.0
    emergency_floor: float = 3.0
    damping_speed: float = 2.5
    p_stop: float = 0.7
    p_go: float = 0.7
    n_confirm: int = 3
    stop_speed: float = 0.1
    crossover_ticks: int = 1000
    junction_radius: float = 15.0
    crossover_clear: float = 10.0
    overshoot_tol: float = 0.5
    overshoot_gain: float = 0.5


@dataclass(frozen=True)
class PerceptionConfig:
    R: int = 20
    n_waypoints: int = 10
    waypoint_spacing: float = 1.0
    occlusion: bool = False
    peak_threshold: float = 0.1
    # noise model
    p_miss: float = 0.0
    p_fp: float = 0.0
    conf_lo: float = 1.0
    conf_hi: float = 1.0
    fp_conf_lo: float = 0.2
    fp_conf_hi: float = 0.5
    sigma_offset: float = 0.0
    sigma_size: float = 0.0
    sigma_heading: float = 0.0
    sigma_speed: float = 0.0
    sigma_waypoint: float = 0.0
    tl_flip: float = 0.0


@dataclass(frozen=True)
class TrackingConfig:
    gate: float = 2.0
    t_drop: int = 5
    alpha_gain: float = 0.4


DEFAULT_COEFFICIENTS = {
    "collision_pedestrian": 0.50,
    "collision_vehicle": 0.60,
    "collision_layout": 0.65,
    "red_light": 0.70,
    "stop_sign": 0.80,
    "route_deviation": 1.0,
    "timeout": 1.0,
    "blocked": 1.0,
}


@dataclass(frozen=True)
class MetricsConfig:
    coefficients: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    deviation_m: float = 10.0
    blocked_s: float = 90.0
    blocked_speed: float = 0.1
    stop_sign_speed: float = 0.5
    line_half_width: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    timeout_s: float = 120.0
    goal_tolerance: float = 2.0


@dataclass(frozen=True)
class EventConfig:
    threshold: float = 0.2  # log units
    eps: float = 1.0 / 255.0
    window_us: int = 50_000


@dataclass(frozen=True)
class SimConfig:
    physics: PhysicsConfig = PhysicsConfig()
    control: ControlConfig = ControlConfig()
    safety: SafetyConfig = SafetyConfig()
    perception: PerceptionConfig = PerceptionConfig()
    tracking: TrackingConfig = TrackingConfig()
    metrics: MetricsConfig = MetricsConfig()
    run: RunConfig = RunConfig()
    events: EventConfig = EventConfig()


SECTIONS = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _update_section(obj, values: Mapping[str, Any], section: str):
    known = {f.name: f for f in dataclasses.fields(obj)}
    kwargs = {}
    for key, val in values.items():
        if key not in known:
            raise ConfigError(f"unknown key [{section}].{key}")
        cur = getattr(obj, key)
        if isinstance(cur, tuple):
            val = tuple(float(v) for v in val)
        elif isinstance(cur, Mapping):
            merged = dict(cur)
            for k, v in val.items():
                if k not in merged:
                    raise ConfigError(f"unknown key [{section}.{key}].{k}")
                merged[k] = float(v)
            val = merged
        elif isinstance(cur, bool):
            val = bool(val)
        elif isinstance(cur, int):
            val = int(val)
        elif isinstance(cur, float):
            val = float(val)
        kwargs[key] = val
    return dataclasses.replace(obj, **kwargs)


def merge(cfg: SimConfig, doc: Mapping[str, Any]) -> SimConfig:
    """Overlay the config sections present in a parsed TOML document."""
    kwargs = {}
    for name in SECTIONS:
        if name in doc:
            kwargs[name] = _update_section(getattr(cfg, name), doc[name], name)
    return dataclasses.replace(cfg, **kwargs) if kwargs else cfg


def override(cfg: SimConfig, dotted: Mapping[str, Any]) -> SimConfig:
    """Apply ``{"control.lat_kp": 1.2}``-style overrides."""
    doc: dict[str, dict] = {}
    for key, val in dotted.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"bad override key {key!r}")
        doc.setdefault(section, {})[name] = val
    return merge(cfg, doc)


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def base_config() -> SimConfig:
    """Defaults, overlaid with the file named by ``EVDRIVE_CONFIG`` if set."""
    cfg = SimConfig()
    env = os.environ.get("EVDRIVE_CONFIG")
    if env:
        path = Path(env)
        if not path.is_file():
            raise ConfigError(f"EVDRIVE_CONFIG points at missing file {env}")
        cfg = merge(cfg, load_toml(path))
    return cfg


def as_dict(cfg) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: dict(v) if isinstance(v, Mapping) else v for k, v in out.items()}
