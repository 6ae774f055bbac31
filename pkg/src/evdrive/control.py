"""Local target selection and the lateral/longitudinal PID pair."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle
from .world import ControlCommand, EgoState, Route

__all__ = ["ControlCommand", "PidState", "select_target_waypoint", "heading_error", "lateral_pid",
           "longitudinal_pid", "curvature_speed"]


@dataclass(frozen=True)
class PidState:
    k_p: float
    k_i: float
    k_d: float
    i_clamp: float = 2.0
    integral: float = 0.0
    prev_error: float | None = None  # None: no derivative on the first call

    def step(self, error: float, dt: float) -> tuple["PidState", float]:
        if dt <= 0:
            raise ValueError("dt must be positive")
        integral = min(max(self.integral + error * dt, -self.i_clamp), self.i_clamp)
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        u = self.k_p * error + self.k_i * integral + self.k_d * deriv
        return dataclasses.replace(self, integral=integral, prev_error=error), u


def select_target_waypoint(route, ego: EgoState, d_min: float = 4.0, d_max: float = 50.0) -> tuple[float, float]:
    """Furthest waypoint whose distance to the ego lies in [d_min, d_max].

    Falls back to the nearest waypoint beyond d_min, then to the last waypoint.
    ``route`` is a Route or an (N, 2) sequence of world-frame points.
    """
    pts = np.asarray(route.waypoints if isinstance(route, Route) else route, dtype=float)
    if pts.size == 0:
        raise ValueError("empty route")
    d = np.hypot(pts[:, 0] - ego.x, pts[:, 1] - ego.y)
    band = np.nonzero((d >= d_min) & (d <= d_max))[0]
    if len(band):
        i = band[np.argmax(d[band])]
    else:
        beyond = np.nonzero(d > d_min)[0]
        i = beyond[np.argmin(d[beyond])] if len(beyond) else len(pts) - 1
    return float(pts[i, 0]), float(pts[i, 1])


def heading_error(ego: EgoState, target) -> float:
    """Signed angle from the ego heading to the bearing of ``target``, in (-pi, pi]."""
    dx, dy = target[0] - ego.x, target[1] - ego.y
    if dx == 0.0 and dy == 0.0:
        raise ValueError("target coincides with ego position")
    return wrap_angle(math.atan2(dy, dx) - ego.yaw)


def lateral_pid(pid: PidState, theta_e: float, dt: float) -> tuple[PidState, float]:
    pid, u = pid.step(theta_e, dt)
    return pid, min(max(u, -1.0), 1.0)


def longitudinal_pid(pid: PidState, v_target: float, v_current: float, dt: float,
                     hard_stop_speed: float = 0.1) -> tuple[PidState, float, float]:
    """Speed PID whose signed output is split into throttle (u > 0) and brake (u < 0)."""
    if v_target < 0:
        raise ValueError("v_target must be non-negative")
    pid, u = pid.step(v_target - v_current, dt)
    if v_target == 0.0 and v_current > hard_stop_speed:
        return pid, 0.0, 1.0
    return pid, min(max(0.0, u), 1.0), min(max(0.0, -u), 1.0)


def curvature_speed(theta_e: float, v_max: float, k_curv: float = 1.5, floor: float = 0.3) -> float:
    return v_max * max(floor, 1.0 - k_curv * abs(theta_e))
