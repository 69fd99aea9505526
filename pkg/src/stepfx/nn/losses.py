"""Losses as (scalar, gradient-w.r.t.-prediction) pairs."""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-7


def _check_shapes(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"loss shape mismatch: pred {pred.shape} vs target {target.shape}")


def loss_mse(pred: np.ndarray, target: np.ndarray):
    _check_shapes(pred, target)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def loss_bce(pred: np.ndarray, target: np.ndarray):
    """Binary cross-entropy on probabilities, clamped to [1e-7, 1-1e-7]."""
    _check_shapes(pred, target)
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))
    grad = (-target / p + (1.0 - target) / (1.0 - p)) / p.size
    return loss, grad


def loss_cce(pred: np.ndarray, target: np.ndarray):
    """Categorical cross-entropy: (B, K) probabilities vs one-hot rows."""
    _check_shapes(pred, target)
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    batch = pred.shape[0]
    loss = float(-np.sum(target * np.log(p)) / batch)
    grad = -(target / p) / batch
    return loss, grad


LOSSES = {"mse": loss_mse, "bce": loss_bce, "cce": loss_cce}
