"""Pose regression loss: L1 on position plus a cosine heading term."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import Pose2


def loss(pred: Pose2, truth: Pose2) -> float:
    """``sum |dpos| + |cos(theta - theta_hat) - 1|`` over the evaluated components."""
    if pred.mask != truth.mask:
        raise ValueError(f"pose masks differ: {pred.mask} vs {truth.mask}")
    mx, my, mt = truth.mask
    total = 0.0
    if mx:
        total += abs(truth.x - pred.x)
    if my:
        total += abs(truth.y - pred.y)
    if mt:
        total += abs(math.cos(truth.theta - pred.theta) - 1.0)
    return total


def batch_loss(out: np.ndarray, target: np.ndarray, mask) -> tuple[float, np.ndarray]:
    """Mean loss over a batch of raw outputs and its gradient w.r.t. ``out``.

    ``out`` and ``target`` are (N, 3) arrays of (x, y, heading).
    """
    m = np.asarray(mask, dtype=out.dtype)
    n = out.shape[0]
    d = out - target
    per = np.abs(d[:, 0]) * m[0] + np.abs(d[:, 1]) * m[1] + (1.0 - np.cos(target[:, 2] - out[:, 2])) * m[2]
    grad = np.empty_like(out)
    grad[:, 0] = np.sign(d[:, 0]) * m[0]
    grad[:, 1] = np.sign(d[:, 1]) * m[1]
    grad[:, 2] = -np.sin(target[:, 2] - out[:, 2]) * m[2]
    return float(per.mean()), grad / n


def per_item_loss(out: np.ndarray, target: np.ndarray, mask) -> np.ndarray:
    m = np.asarray(mask, dtype=float)
    d = out - target
    return np.abs(d[:, 0]) * m[0] + np.abs(d[:, 1]) * m[1] + (1.0 - np.cos(target[:, 2] - out[:, 2])) * m[2]
