"""Planar geometry helpers shared by the simulator, safety checks and metrics."""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def box_corners(x, y, yaw, half_w, half_l) -> np.ndarray:
    """Corners (4x2) of an oriented box; half_l runs along ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    fwd = np.array([c, s]) * half_l
    left = np.array([-s, c]) * half_w
    ctr = np.array([x, y])
    return np.array([ctr + fwd + left, ctr - fwd + left, ctr - fwd - left, ctr + fwd - left])


def boxes_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads given as 4x2 corner arrays.

    Touching edges do not count as overlap.
    """
    for poly in (a, b):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def to_local(px, py, ox, oy, yaw):
    """Express world point(s) in the frame at (ox, oy) rotated by yaw."""
    dx = np.asarray(px) - ox
    dy = np.asarray(py) - oy
    c, s = math.cos(yaw), math.sin(yaw)
    return c * dx + s * dy, -s * dx + c * dy


def to_world(lx, ly, ox, oy, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    lx = np.asarray(lx)
    ly = np.asarray(ly)
    return ox + c * lx - s * ly, oy + s * lx + c * ly


class Polyline:
    """Arc-length parameterised polyline."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two (x, y) points")
        seg = np.diff(pts, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lens <= 0.0):
            raise ValueError("consecutive polyline points must differ")
        self.points = pts
        self.seg = seg
        self.seg_len = lens
        self.cum = np.concatenate([[0.0], np.cumsum(lens)])
        self.length = float(self.cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length ``s``; clamped to the polyline ends."""
        if s <= 0.0:
            return self.points[0].copy()
        if s >= self.length:
            return self.points[-1].copy()
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(i, len(self.seg) - 1)
        f = (s - self.cum[i]) / self.seg_len[i]
        return self.points[i] + f * self.seg[i]

    def heading_at(self, s: float) -> float:
        i = int(np.searchsorted(self.cum, min(max(s, 0.0), self.length), side="right")) - 1
        i = min(max(i, 0), len(self.seg) - 1)
        return math.atan2(self.seg[i, 1], self.seg[i, 0])

    def project(self, p, s_lo: float = 0.0, s_hi: float = math.inf):
        """Closest point to ``p`` among segments overlapping [s_lo, s_hi].

        Returns (arc length, distance).
        """
        p = np.asarray(p, dtype=float)
        best_s, best_d = 0.0, math.inf
        for i in range(len(self.seg)):
            if self.cum[i + 1] < s_lo or self.cum[i] > s_hi:
                continue
            f = float(np.dot(p - self.points[i], self.seg[i]) / self.seg_len[i] ** 2)
            f = min(max(f, 0.0), 1.0)
            q = self.points[i] + f * self.seg[i]
            d = float(np.hypot(*(p - q)))
            if d < best_d:
                best_d, best_s = d, float(self.cum[i] + f * self.seg_len[i])
        return best_s, best_d
