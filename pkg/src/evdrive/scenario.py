"""Scenario files: TOML with [ego], [route], [[actors]], [[traffic_lights]] and
config sections ([physics], [control], [safety], ...). Angles are degrees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import shapely
from shapely.geometry import Polygon

from .config import ConfigError, SimConfig, base_config, load_toml, merge
from .world import (Actor, ActorKind, EgoState, Layout, Phase, Route, StopSign,
                    TrafficLight, WorldState)

BUILTIN = {"A": "scenario_a.toml", "B": "scenario_b.toml", "C": "scenario_c.toml",
           "free": "free_driving.toml", "red": "red_light.toml"}

_WORLD_SECTIONS = {"scenario", "ego", "route", "actors", "traffic_lights", "stop_signs", "drivable"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    doc: dict[str, Any]
    sim: SimConfig = field(default_factory=SimConfig)
    source: str = ""

    @classmethod
    def from_dict(cls, doc: dict, base: SimConfig | None = None, source: str = "") -> "ScenarioConfig":
        unknown = set(doc) - _WORLD_SECTIONS - set(SimConfig.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown sections {sorted(unknown)}")
        for required in ("ego", "route"):
            if required not in doc:
                raise ScenarioError(f"missing [{required}] section")
        try:
            sim = merge(base if base is not None else base_config(), doc)
        except ConfigError as exc:
            raise ScenarioError(str(exc)) from exc
        if sim.perception.R not in (20, 40):
            raise ScenarioError(f"perception.R must be 20 or 40, got {sim.perception.R}")
        sid = str(doc.get("scenario", {}).get("id", Path(source).stem or "anon"))
        return cls(id=sid, doc=doc, sim=sim, source=source)

    @classmethod
    def from_file(cls, path, base: SimConfig | None = None) -> "ScenarioConfig":
        try:
            doc = load_toml(path)
        except (OSError, ValueError) as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
        return cls.from_dict(doc, base=base, source=str(path))

    @classmethod
    def builtin(cls, sid: str, base: SimConfig | None = None) -> "ScenarioConfig":
        if sid not in BUILTIN:
            raise ScenarioError(f"unknown scenario id {sid!r}; known: {sorted(BUILTIN)}")
        ref = resources.files("evdrive") / "scenarios" / BUILTIN[sid]
        with resources.as_file(ref) as path:
            return cls.from_file(path, base=base)


def resolve(name: str, base: SimConfig | None = None) -> ScenarioConfig:
    """Builtin id or path to a scenario file."""
    if name in BUILTIN:
        return ScenarioConfig.builtin(name, base)
    if Path(name).is_file():
        return ScenarioConfig.from_file(name, base)
    raise ScenarioError(f"unknown scenario {name!r}")


def builtin_dir() -> Path:
    return Path(str(resources.files("evdrive") / "scenarios"))


def _f(d: dict, key: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ScenarioError(f"missing field {key!r}")
        return default
    val = float(d[key])
    if not math.isfinite(val):
        raise ScenarioError(f"non-finite {key}")
    return val


def _points(raw, what: str) -> tuple[tuple[float, float], ...]:
    try:
        pts = tuple((float(p[0]), float(p[1])) for p in raw)
    except (TypeError, IndexError, ValueError) as exc:
        raise ScenarioError(f"malformed {what}: {exc}") from exc
    return pts


def _actor(d: dict) -> Actor:
    kind = ActorKind(d.get("kind", "vehicle"))
    default_size = (0.6, 0.6) if kind == ActorKind.PEDESTRIAN else (4.5, 2.0)
    keyframes = tuple((float(k[0]), float(k[1]), float(k[2])) for k in d.get("keyframes", ()))
    x = _f(d, "x", keyframes[0][1] if keyframes else None)
    y = _f(d, "y", keyframes[0][2] if keyframes else None)
    actor = Actor(
        id=int(d["id"]),
        kind=kind,
        x=x,
        y=y,
        yaw=math.radians(_f(d, "yaw_deg", 0.0)),
        half_w=_f(d, "width", default_size[1]) / 2.0,
        half_l=_f(d, "length", default_size[0]) / 2.0,
        keyframes=keyframes,
    )
    return actor.at(0.0)


def _light(d: dict) -> TrafficLight:
    if "phases" in d:
        schedule = tuple((float(t), Phase(p)) for t, p in d["phases"])
    else:
        schedule = ((0.0, Phase(d.get("phase", "Green"))),)
    return TrafficLight(
        id=int(d.get("id", 0)),
        x=_f(d, "x"),
        y=_f(d, "y"),
        yaw=math.radians(_f(d, "yaw_deg", 0.0)),
        schedule=schedule,
        affects_ego_lane=bool(d.get("affects_ego_lane", True)),
    ).at(0.0)


def load_scenario(scenario: ScenarioConfig | str) -> WorldState:
    """Build the initial world for a scenario config (or builtin id)."""
    if isinstance(scenario, str):
        scenario = resolve(scenario)
    doc = scenario.doc
    try:
        e = doc["ego"]
        ego = EgoState(
            x=_f(e, "x", 0.0),
            y=_f(e, "y", 0.0),
            yaw=math.radians(_f(e, "yaw_deg", 0.0)),
            v=_f(e, "v", 0.0),
            half_w=_f(e, "width", 2.0) / 2.0,
            half_l=_f(e, "length", 4.5) / 2.0,
        )
        route_doc = doc["route"]
        route = Route(_points(route_doc.get("waypoints", ()), "route"))
        actors = tuple(_actor(a) for a in doc.get("actors", ()))
        lights = tuple(_light(t) for t in doc.get("traffic_lights", ()))
        signs = tuple(StopSign(_f(s, "x"), _f(s, "y"), math.radians(_f(s, "yaw_deg", 0.0)))
                      for s in doc.get("stop_signs", ()))
        if "drivable" in doc:
            polys = [Polygon(_points(p["points"], "drivable polygon")) for p in doc["drivable"]]
            if not all(p.is_valid and p.area > 0 for p in polys):
                raise ScenarioError("invalid drivable polygon")
            layout = Layout(drivable=shapely.union_all(polys), stop_signs=signs)
        else:
            layout = Layout.around_route(route, _f(route_doc, "road_half_width", 7.0), signs)
        return WorldState(time=0.0, step=0, ego=ego, actors=actors, traffic_lights=lights,
                          route=route, layout=layout)
    except ScenarioError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ScenarioError(f"{scenario.id}: {exc}") from exc
