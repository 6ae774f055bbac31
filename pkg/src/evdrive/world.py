"""Ground-truth world state and the kinematic bicycle step."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from .config import DT, PhysicsConfig
from .geometry import Polyline, box_corners, wrap_angle


class ActorKind(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    STATIC = "static"


class Phase(str, Enum):
    RED = "Red"
    YELLOW = "Yellow"
    GREEN = "Green"


@dataclass(frozen=True)
class ControlCommand:
    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def validate(self) -> None:
        vals = (self.steer, self.throttle, self.brake)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite control command {vals}")
        if not -1.0 <= self.steer <= 1.0:
            raise ValueError(f"steer {self.steer} outside [-1, 1]")
        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0):
            raise ValueError(f"throttle/brake outside [0, 1]: {vals}")


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    yaw: float
    v: float
    half_w: float = 1.0
    half_l: float = 2.25

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError("ego speed must be non-negative")

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.yaw, self.half_w, self.half_l)


@dataclass(frozen=True)
class Actor:
    """A scripted or static road user.

    ``keyframes`` is a tuple of (t, x, y); the actor moves at constant
    velocity between consecutive keyframes and holds still outside them.
    """

    id: int
    kind: ActorKind
    x: float
    y: float
    yaw: float
    vx: float = 0.0
    vy: float = 0.0
    half_w: float = 1.0
    half_l: float = 2.25
    keyframes: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.half_w <= 0.0 or self.half_l <= 0.0:
            raise ValueError(f"actor {self.id}: half extents must be positive")
        if self.kind == ActorKind.STATIC and (self.vx != 0.0 or self.vy != 0.0 or self.keyframes):
            raise ValueError(f"actor {self.id}: static actors cannot move")
        ts = [k[0] for k in self.keyframes]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"actor {self.id}: keyframe times must increase")

    def at(self, t: float) -> "Actor":
        """State of this actor at time ``t`` (a pure function of t)."""
        kf = self.keyframes
        if not kf:
            return self
        yaw = self.yaw
        # heading follows the most recent moving segment
        for (t0, x0, y0), (t1, x1, y1) in zip(kf, kf[1:]):
            if t0 >= t:
                break
            if (x1, y1) != (x0, y0):
                yaw = math.atan2(y1 - y0, x1 - x0)
        if t <= kf[0][0]:
            x, y, vx, vy = kf[0][1], kf[0][2], 0.0, 0.0
        elif t >= kf[-1][0]:
            x, y, vx, vy = kf[-1][1], kf[-1][2], 0.0, 0.0
        else:
            i = max(j for j in range(len(kf) - 1) if kf[j][0] < t)
            (t0, x0, y0), (t1, x1, y1) = kf[i], kf[i + 1]
            f = (t - t0) / (t1 - t0)
            vx, vy = (x1 - x0) / (t1 - t0), (y1 - y0) / (t1 - t0)
            x, y = x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        return dataclasses.replace(self, x=x, y=y, yaw=yaw, vx=vx, vy=vy)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.yaw, self.half_w, self.half_l)


@dataclass(frozen=True)
class TrafficLight:
    """Light governing a stop line at (x, y) for traffic heading ``yaw``."""

    id: int
    x: float
    y: float
    yaw: float
    schedule: tuple[tuple[float, Phase], ...]
    affects_ego_lane: bool = True
    phase: Phase = Phase.GREEN

    def at(self, t: float) -> "TrafficLight":
        phase = self.schedule[0][1]
        for t0, ph in self.schedule:
            if t0 <= t:
                phase = ph
        return dataclasses.replace(self, phase=phase)

    def longitudinal(self, x: float, y: float) -> float:
        """Signed distance of a point past the stop line (negative = before it)."""
        return (x - self.x) * math.cos(self.yaw) + (y - self.y) * math.sin(self.yaw)

    def lateral(self, x: float, y: float) -> float:
        return -(x - self.x) * math.sin(self.yaw) + (y - self.y) * math.cos(self.yaw)


@dataclass(frozen=True)
class StopSign:
    x: float
    y: float
    yaw: float

    longitudinal = TrafficLight.longitudinal
    lateral = TrafficLight.lateral


@dataclass(frozen=True)
class Route:
    waypoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("route needs at least two waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a == b:
                raise ValueError(f"consecutive identical route waypoints {a}")

    @cached_property
    def line(self) -> Polyline:
        return Polyline(self.waypoints)

    @property
    def length(self) -> float:
        return self.line.length


@dataclass(frozen=True)
class Layout:
    """Static map: drivable area and stop signs."""

    drivable: Polygon
    stop_signs: tuple[StopSign, ...] = ()

    @classmethod
    def around_route(cls, route: Route, half_width: float, stop_signs=()) -> "Layout":
        area = LineString(route.waypoints).buffer(half_width, cap_style="flat", join_style="round")
        # extend past both ends so start and goal poses are inside
        line = route.line
        h0, h1 = line.heading_at(0.0), line.heading_at(line.length)
        p0, p1 = line.points[0], line.points[-1]
        ext = LineString([p0 - 6.0 * np.array([math.cos(h0), math.sin(h0)]), p0]).buffer(
            half_width, cap_style="flat"
        )
        ext2 = LineString([p1, p1 + 6.0 * np.array([math.cos(h1), math.sin(h1)])]).buffer(
            half_width, cap_style="flat"
        )
        return cls(drivable=shapely.union_all([area, ext, ext2]), stop_signs=tuple(stop_signs))

    def contains_box(self, corners: np.ndarray) -> bool:
        return self.drivable.covers(Polygon(corners))


@dataclass(frozen=True)
class WorldState:
    time: float
    step: int
    ego: EgoState
    actors: tuple[Actor, ...]
    traffic_lights: tuple[TrafficLight, ...]
    route: Route
    layout: Layout | None = None

    def __post_init__(self):
        ids = [a.id for a in self.actors]
        if len(ids) != len(set(ids)):
            raise ValueError("actor ids must be unique")

    def at_step(self, step: int, ego: EgoState) -> "WorldState":
        """World at ``step`` with the given ego; scripted parts are recomputed."""
        t = step * DT
        return dataclasses.replace(
            self,
            time=t,
            step=step,
            ego=ego,
            actors=tuple(a.at(t) for a in self.actors),
            traffic_lights=tuple(tl.at(t) for tl in self.traffic_lights),
        )


def step_kinematics(world: WorldState, cmd: ControlCommand, dt: float = DT,
                    physics: PhysicsConfig = PhysicsConfig()) -> WorldState:
    """Advance the ego with a kinematic bicycle model and actors by their scripts."""
    cmd.validate()
    if abs(dt - physics.dt) > 1e-12:
        raise ValueError(f"fixed step is {physics.dt}s, got {dt}")
    e = world.ego
    a = physics.a_max * cmd.throttle - physics.b_max * cmd.brake - physics.c_drag * e.v
    v_next = max(0.0, e.v + a * dt)
    delta = cmd.steer * math.radians(physics.delta_max_deg)
    yaw_rate = e.v / physics.wheelbase * math.tan(delta)
    yaw_next = e.yaw + yaw_rate * dt
    yaw_mid = e.yaw + 0.5 * yaw_rate * dt
    ego = dataclasses.replace(
        e,
        x=e.x + e.v * math.cos(yaw_mid) * dt,
        y=e.y + e.v * math.sin(yaw_mid) * dt,
        yaw=wrap_angle(yaw_next),
        v=v_next,
    )
    return world.at_step(world.step + 1, ego)
