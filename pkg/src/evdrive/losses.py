"""Evaluation losses for perception output against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    pt: float = 0.2  # waypoints
    map: float = 0.5  # density map
    tf: float = 0.1  # traffic information
    light: float = 1.0 / 3.0
    stop: float = 1.0 / 3.0
    junction: float = 1.0 / 3.0

    def __post_init__(self):
        if any(w < 0 for w in (self.pt, self.map, self.tf, self.light, self.stop, self.junction)):
            raise ValueError("loss weights must be non-negative")


def _grid(m) -> np.ndarray:
    return np.asarray(getattr(m, "grid", m), dtype=float)


def waypoint_loss(pred, gt) -> float:
    """Summed L1 distance between matching waypoints."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if pred.shape != gt.shape:
        raise ValueError(f"waypoint shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.abs(pred - gt).sum())


def _gt_prob(gt: np.ndarray) -> np.ndarray:
    p = gt[..., 0]
    if not np.all((p == 0) | (p == 1)):
        raise ValueError("ground-truth probability channel must be 0 or 1")
    return p


def prob_loss_balanced(pred_map, gt_map) -> float:
    """Mean L1 over negative cells and mean L1 over positive cells, averaged.

    A class with no cells contributes zero.
    """
    pred, gt = _grid(pred_map), _grid(gt_map)
    if pred.shape != gt.shape:
        raise ValueError("density maps differ in shape")
    p = _gt_prob(gt)
    err = np.abs(p - pred[..., 0])
    neg, pos = p == 0, p == 1
    l0 = err[neg].sum() / neg.sum() if neg.any() else 0.0
    l1 = err[pos].sum() / pos.sum() if pos.any() else 0.0
    return float(0.5 * (l0 + l1))


def meta_loss(pred_map, gt_map) -> float:
    """L1 over the six meta channels, positive cells only, divided by their count."""
    pred, gt = _grid(pred_map), _grid(gt_map)
    if pred.shape != gt.shape:
        raise ValueError("density maps differ in shape")
    pos = _gt_prob(gt) == 1
    n = pos.sum()
    if n == 0:
        return 0.0
    return float(np.abs(gt[pos][:, 1:7] - pred[pos][:, 1:7]).sum() / n)


def bce(p: float, y: bool) -> float:
    p = min(max(p, BCE_EPS), 1.0 - BCE_EPS)
    return -math.log(p) if y else -math.log(1.0 - p)


def traffic_info_loss(pred: dict, gt: dict, w: LossWeights = LossWeights()) -> float:
    """Weighted binary cross-entropy over light / stop / junction flags."""
    return (w.light * bce(pred["tl"], gt["tl"]) + w.stop * bce(pred["stop"], gt["stop"])
            + w.junction * bce(pred["junction"], gt["junction"]))


def map_loss(pred_map, gt_map) -> float:
    return prob_loss_balanced(pred_map, gt_map) + meta_loss(pred_map, gt_map)


def total_loss(l_pt: float, l_map: float, l_tf: float, w: LossWeights = LossWeights()) -> float:
    # fsum keeps the weighted sum correctly rounded (0.2 + 0.5 + 0.1 is exactly 0.8)
    return math.fsum((w.pt * l_pt, w.map * l_map, w.tf * l_tf))
