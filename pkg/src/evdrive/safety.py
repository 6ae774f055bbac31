"""Rule-based safety layer: traffic-light state machine, multi-horizon
clearance checks, the analytic desired-speed rule and the final command gate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import SafetyConfig
from .perception import TrafficLightBelief
from .world import ControlCommand, EgoState


class TlState(str, Enum):
    DRIVING = "Driving"
    STOPPED_AT_RED = "StoppedAtRed"
    FORCED_CROSSOVER = "ForcedCrossover"


class Override(str, Enum):
    RED_LIGHT = "red_light"
    EMERGENCY_BRAKE = "emergency_brake"
    OVERSHOOT = "overshoot"


@dataclass(frozen=True)
class TrafficLightFsm:
    state: TlState = TlState.DRIVING
    red_counter: int = 0
    stop_ticks: int = 0


def tl_update(fsm: TrafficLightFsm, belief: TrafficLightBelief, near_junction: bool, v: float,
              cleared: bool = False, cfg: SafetyConfig = SafetyConfig()) -> tuple[TrafficLightFsm, bool]:
    """Advance the light FSM one tick; returns (fsm, must_stop).

    ``cleared`` tells a ForcedCrossover that the ego is past the junction.
    """
    if fsm.state == TlState.FORCED_CROSSOVER:
        if cleared:
            return TrafficLightFsm(), False
        return fsm, False
    red = belief.p_red + belief.p_yellow > cfg.p_stop
    if red and near_junction:
        counter = fsm.red_counter + 1
    else:
        counter = max(0, fsm.red_counter - 1)
    if belief.p_green > cfg.p_go:
        return TrafficLightFsm(), False
    must_stop = counter >= cfg.n_confirm
    if not must_stop:
        return TrafficLightFsm(TlState.DRIVING, counter, 0), False
    stop_ticks = fsm.stop_ticks + (1 if v < cfg.stop_speed else 0)
    if stop_ticks > cfg.crossover_ticks:
        return TrafficLightFsm(TlState.FORCED_CROSSOVER, 0, 0), False
    return TrafficLightFsm(TlState.STOPPED_AT_RED, counter, stop_ticks), True


@dataclass(frozen=True)
class HorizonClearances:
    horizons: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.horizons) != len(self.values):
            raise ValueError("one clearance per horizon")
        if any(v < 0 for v in self.values):
            raise ValueError("clearances are non-negative")

    def d(self, t: float) -> float:
        for h, v in zip(self.horizons, self.values):
            if abs(h - t) < 1e-9:
                return v
        raise KeyError(f"no clearance for horizon {t}")

    def buffered(self, buffer: float) -> "HorizonClearances":
        return HorizonClearances(self.horizons, tuple(max(0.0, v - buffer) for v in self.values))

    @classmethod
    def free(cls, horizons=SafetyConfig.horizons, d_free: float = 100.0) -> "HorizonClearances":
        return cls(tuple(horizons), (d_free,) * len(horizons))


def _plan_polyline(plan, ego: EgoState, length: float) -> np.ndarray:
    """Ego position followed by the plan, de-duplicated and extended straight to ``length``."""
    pts = [np.array([ego.x, ego.y])]
    for p in np.asarray(plan, dtype=float).reshape(-1, 2):
        if np.hypot(*(p - pts[-1])) > 1e-6:
            pts.append(p)
    pts = np.array(pts)
    seg = np.diff(pts, axis=0)
    total = float(np.hypot(seg[:, 0], seg[:, 1]).sum()) if len(seg) else 0.0
    if total < length:
        if len(seg):
            h = math.atan2(seg[-1, 1], seg[-1, 0])
        else:
            h = ego.yaw
        pts = np.vstack([pts, pts[-1] + (length - total) * np.array([math.cos(h), math.sin(h)])])
    return pts


def _entry_arc(pts: np.ndarray, cum: np.ndarray, s0: float, boxes: np.ndarray) -> np.ndarray:
    """First arc length >= s0 at which the polyline enters each box.

    ``boxes`` rows are (cx, cy, yaw, half_l, half_w). Returns inf for no hit.
    """
    seg_len = np.diff(cum)
    i0 = min(int(np.searchsorted(cum, s0, side="right")) - 1, len(seg_len) - 1)
    f0 = (s0 - cum[i0]) / seg_len[i0]
    start = pts[i0] + f0 * (pts[i0 + 1] - pts[i0])
    A = np.vstack([start, pts[i0 + 1:-1]])  # segment starts
    B = pts[i0 + 1:]
    sA = np.concatenate([[s0], cum[i0 + 1:-1]])
    L = np.hypot(*(B - A).T)
    cx, cy, yaw, hl, hw = (boxes[:, k:k + 1] for k in range(5))
    c, s = np.cos(yaw), np.sin(yaw)
    # segment endpoints in each box frame: shape (n_boxes, n_segments)
    ax = c * (A[:, 0] - cx) + s * (A[:, 1] - cy)
    ay = -s * (A[:, 0] - cx) + c * (A[:, 1] - cy)
    bx = c * (B[:, 0] - cx) + s * (B[:, 1] - cy)
    by = -s * (B[:, 0] - cx) + c * (B[:, 1] - cy)
    t0 = np.zeros_like(ax)
    t1 = np.ones_like(ax)
    ok = np.ones_like(ax, dtype=bool)
    for a, b, h in ((ax, bx, hl), (ay, by, hw)):
        p = b - a
        flat = p == 0
        ok &= ~(flat & (np.abs(a) > h))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-h - a) / p
            tb = (h - a) / p
        lo = np.where(flat, -np.inf, np.minimum(ta, tb))
        hi = np.where(flat, np.inf, np.maximum(ta, tb))
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
    hit = ok & (t0 <= t1)
    arc = np.where(hit, sA + t0 * L, np.inf)
    return arc.min(axis=1) - s0


def project_clearances(tracks, plan, ego: EgoState, cfg: SafetyConfig = SafetyConfig()) -> HorizonClearances:
    """Free distance along the plan from the ego's predicted point at each horizon.

    Tracks move at constant velocity; their boxes are inflated by the ego half
    width plus a margin. The ego advances along the plan at its current speed.
    """
    if len(plan) == 0:
        raise ValueError("empty plan")
    s_max = ego.v * max(cfg.horizons)
    pts = _plan_polyline(plan, ego, max(cfg.plan_length, s_max + cfg.plan_length / 2))
    seg = np.diff(pts, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    tracks = list(tracks)
    infl = ego.half_w + cfg.margin
    out = []
    for t in cfg.horizons:
        if not tracks:
            out.append(cfg.d_free)
            continue
        boxes = np.array([(tr.x + tr.vx * t, tr.y + tr.vy * t, tr.yaw, tr.l / 2 + infl, tr.w / 2 + infl)
                          for tr in tracks])
        s_e = min(ego.v * t, cum[-1] - 1e-9)
        d = float(_entry_arc(pts, cum, s_e, boxes).min())
        out.append(min(max(d, 0.0), cfg.d_free))
    return HorizonClearances(tuple(cfg.horizons), tuple(out))


def safe_distance(clearances: HorizonClearances, d_buffer: float = 2.5) -> float:
    """Minimum over horizons of clearance minus buffer; negative means intrusion."""
    if d_buffer < 0:
        raise ValueError("buffer must be non-negative")
    return min(v - d_buffer for v in clearances.values)


def desired_speed(clearances: HorizonClearances, v_current: float, v_max: float = 6.5,
                  cfg: SafetyConfig = SafetyConfig()) -> float:
    """Closed-form safe speed from the buffered clearances at 0, 0.5 and 1.0 s."""
    if v_current < 0:
        raise ValueError("v_current must be non-negative")
    d0, d05, d10 = clearances.d(0.0), clearances.d(0.5), clearances.d(1.0)
    if d0 < max(cfg.emergency_floor, v_current):
        return 0.0
    damp = max(0.0, v_current - cfg.damping_speed)
    return max(0.0, min(v_max, 4.0 * d05 - v_current - damp, 2.0 * d10 - 0.5 * v_current - damp))


def safety_gate(pid_cmd: ControlCommand, must_stop: bool, v_cmd: float, v_current: float,
                cfg: SafetyConfig = SafetyConfig()) -> tuple[ControlCommand, Override | None]:
    """Final say on the command; returns it with the override reason (if any)."""
    if must_stop or v_cmd == 0.0:
        reason = Override.RED_LIGHT if must_stop else Override.EMERGENCY_BRAKE
        return ControlCommand(pid_cmd.steer, 0.0, 1.0), reason
    if v_current > v_cmd + cfg.overshoot_tol:
        brake = min(1.0, cfg.overshoot_gain * (v_current - v_cmd))
        return ControlCommand(pid_cmd.steer, 0.0, max(brake, pid_cmd.brake)), Override.OVERSHOOT
    return pid_cmd, None
