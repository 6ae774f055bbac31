"""Heuristic multi-object tracker: greedy nearest-neighbour association and
confidence-weighted velocity/heading smoothing."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .config import DT, TrackingConfig
from .geometry import wrap_angle


@dataclass(frozen=True)
class TrackedObject:
    id: int
    x: float
    y: float
    vx: float
    vy: float
    yaw: float
    confidence: float
    w: float = 1.0
    l: float = 1.0
    age: int = 1
    misses: int = 0


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]  # (track index, detection index)
    unmatched_tracks: tuple[int, ...]
    unmatched_detections: tuple[int, ...]


def associate(tracks, detections, gate: float = 2.0) -> Matching:
    """Greedy one-to-one matching in ascending Euclidean distance.

    Only pairs strictly closer than ``gate`` can match. Equal distances go to
    the lower detection index, then the lower track index.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    cand = []
    for ti, t in enumerate(tracks):
        for di, d in enumerate(detections):
            dist = math.hypot(t.x - d.x, t.y - d.y)
            if dist < gate:
                cand.append((dist, di, ti))
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, di, ti in cand:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        pairs.append((ti, di))
    return Matching(
        pairs=tuple(sorted(pairs)),
        unmatched_tracks=tuple(i for i in range(len(tracks)) if i not in used_t),
        unmatched_detections=tuple(i for i in range(len(detections)) if i not in used_d),
    )


def smooth_update(track: TrackedObject, measured, alpha_gain: float = 0.4) -> TrackedObject:
    """Blend velocity and heading toward the measurement with alpha = gain * confidence.

    Position and box size are taken from the measurement as-is; heading is
    interpolated along the shorter arc.
    """
    conf = measured.confidence
    if not 0.0 <= conf <= 1.0:
        raise ValueError(f"confidence {conf} outside [0, 1]")
    a = alpha_gain * conf
    return dataclasses.replace(
        track,
        x=measured.x,
        y=measured.y,
        vx=a * measured.vx + (1.0 - a) * track.vx,
        vy=a * measured.vy + (1.0 - a) * track.vy,
        yaw=wrap_angle(track.yaw + a * wrap_angle(measured.yaw - track.yaw)),
        confidence=conf,
        w=measured.w,
        l=measured.l,
        age=track.age + 1,
        misses=0,
    )


class Tracker:
    """Owns the track list for one simulation."""

    def __init__(self, cfg: TrackingConfig = TrackingConfig(), dt: float = DT):
        self.cfg = cfg
        self.dt = dt
        self.tracks: list[TrackedObject] = []
        self._next_id = 1

    def update(self, detections) -> list[TrackedObject]:
        """One tick: coast, associate (world-frame detections), smooth, spawn, retire."""
        predicted = [dataclasses.replace(t, x=t.x + t.vx * self.dt, y=t.y + t.vy * self.dt)
                     for t in self.tracks]
        m = associate(predicted, detections, self.cfg.gate)
        out = []
        for ti, di in m.pairs:
            out.append(smooth_update(predicted[ti], detections[di], self.cfg.alpha_gain))
        for ti in m.unmatched_tracks:
            t = predicted[ti]
            if t.misses + 1 <= self.cfg.t_drop:
                out.append(dataclasses.replace(t, misses=t.misses + 1, age=t.age + 1))
        for di in m.unmatched_detections:
            d = detections[di]
            out.append(TrackedObject(id=self._next_id, x=d.x, y=d.y, vx=d.vx, vy=d.vy, yaw=d.yaw,
                                     confidence=d.confidence, w=d.w, l=d.l))
            self._next_id += 1
        out.sort(key=lambda t: t.id)
        self.tracks = out
        return out
