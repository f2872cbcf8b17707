"""End-to-end objectives over one (or a concatenation of) episode(s).

Every loss averages over non-pad positions only, so rows marked as padding
never influence the value or the gradient.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def _keep_rows(pad_mask, n: int) -> np.ndarray:
    if pad_mask is None:
        return np.arange(n)
    pad = np.asarray(pad_mask, dtype=bool)
    if pad.shape != (n,):
        raise ShapeError(f"pad mask of shape {pad.shape} for {n} positions")
    keep = np.flatnonzero(~pad)
    if keep.size == 0:
        raise ValueError("every position is padding")
    return keep


def _masked_ce(logits: Tensor, targets, pad_mask) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64)
    n, classes = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets of shape {targets.shape} for logits {logits.shape}")
    keep = _keep_rows(pad_mask, n)
    onehot = np.eye(classes)[targets[keep]]
    return ad.mean(ad.cross_entropy(ad.take(logits, keep), onehot))


def action_loss(logits: Tensor, targets, pad_mask=None) -> Tensor:
    """Mean cross-entropy over the 14 action classes at non-pad positions."""
    return _masked_ce(logits, targets, pad_mask)


def object_loss(logits: Tensor, targets, pad_mask=None) -> Tensor:
    """Mean cross-entropy over the 85 object classes at non-pad positions."""
    return _masked_ce(logits, targets, pad_mask)


def goal_progress_targets(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("goal progress needs at least one step")
    return (np.arange(n, dtype=np.float64) + 1.0) / n


def goal_progress_loss(pred: Tensor, targets, pad_mask=None) -> Tensor:
    targets = np.asarray(targets, dtype=np.float64)
    if pred.shape != targets.shape or pred.ndim != 1:
        raise ShapeError(f"goal progress prediction {pred.shape} vs targets {targets.shape}")
    keep = _keep_rows(pad_mask, pred.shape[0])
    return ad.mse(ad.take(pred, keep), targets[keep])


def total_loss(l_action: Tensor, l_object: Tensor, l_gp: Tensor, object_weight: float = 0.1,
               gp_weight: float = 0.1) -> Tensor:
    return ad.add(ad.add(l_action, ad.scale(l_object, object_weight)), ad.scale(l_gp, gp_weight))
