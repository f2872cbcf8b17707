"""Contrastive pre-alignment: frame-pair to action matching and text to frame-sequence matching.

Frame-pair/action batches use one column per *distinct* action in the batch,
so several rows may share a column. The image-to-action direction is a
softmax over those columns; the action-to-image direction is a softmax over
frame pairs, with each column's positives spread uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .worldgen import vocab as V

TAU_INIT = 0.07
TAU_MIN = 0.01
TAU_MAX = 100.0


@dataclass(frozen=True)
class AffinityTargets:
    unique_actions: np.ndarray  # (U,) ids in first-occurrence order
    Q: np.ndarray  # (N, U) 0/1

    @property
    def columns(self) -> np.ndarray:
        """Target column index per row."""
        return self.Q.argmax(axis=1)

    def i2a(self) -> np.ndarray:
        return self.Q / self.Q.sum(axis=1, keepdims=True)

    def a2i(self) -> np.ndarray:
        """(U, N): each column of ``Q`` as a distribution over frame pairs."""
        col = self.Q.sum(axis=0)
        if np.any(col == 0):
            raise ValueError("affinity matrix has an empty column")
        return (self.Q / col).T


def build_affinity_targets(action_ids) -> AffinityTargets:
    ids = np.asarray(action_ids, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        raise ValueError("empty batch")
    if ids.size < 2:
        raise ValueError("a contrastive batch needs at least two frame pairs")
    if np.any((ids < 0) | (ids >= V.NUM_ACTIONS)):
        raise ValueError(f"action ids must lie in [0, {V.NUM_ACTIONS})")
    _, first = np.unique(ids, return_index=True)
    unique = ids[np.sort(first)]
    Q = (ids[:, None] == unique[None, :]).astype(np.float64)
    return AffinityTargets(unique, Q)


def clamp_temperature(tau: float) -> float:
    return float(min(TAU_MAX, max(TAU_MIN, tau)))


def similarity_logits(rows: Tensor, cols: Tensor, tau) -> Tensor:
    """Cosine similarity of every row with every column, divided by ``tau``."""
    for t in (rows, cols):
        if not np.all(np.isfinite(t.data)):
            raise ValueError("similarity inputs must be finite")
    sims = ad.cosine_similarity(rows, cols)
    if isinstance(tau, Tensor):
        return ad.scale(sims, ad.reciprocal(tau))
    return ad.scale(sims, 1.0 / float(tau))


def p_i2a(logits: Tensor) -> Tensor:
    return ad.softmax(logits)


def p_a2i(logits: Tensor) -> Tensor:
    """(U, N): for each action, a distribution over the frame pairs."""
    return ad.softmax(ad.transpose(logits))


def loss_image_action(logits: Tensor, targets: AffinityTargets) -> Tensor:
    """Mean of KL(targets || predictions) in both matching directions."""
    if logits.shape != targets.Q.shape:
        raise ValueError(f"logits {logits.shape} vs targets {targets.Q.shape}")
    i2a = ad.mean(ad.kl_div(logits, targets.i2a()))
    a2i = ad.mean(ad.kl_div(ad.transpose(logits), targets.a2i()))
    return ad.scale(ad.add(i2a, a2i), 0.5)


def loss_text_image(text_reps: Tensor, seq_reps: Tensor, tau) -> Tensor:
    """Symmetric cross-entropy against the diagonal of the text/sequence similarity matrix."""
    if text_reps.shape != seq_reps.shape or text_reps.ndim != 2:
        raise ValueError(f"text {text_reps.shape} vs sequence {seq_reps.shape}")
    b = text_reps.shape[0]
    if b < 2:
        raise ValueError("text/image contrast needs a batch of at least two")
    logits = similarity_logits(text_reps, seq_reps, tau)
    eye = np.eye(b)
    rows = ad.mean(ad.cross_entropy(logits, eye))
    cols = ad.mean(ad.cross_entropy(ad.transpose(logits), eye))
    return ad.scale(ad.add(rows, cols), 0.5)


def loss_triple(l_ti: Tensor, l_ia: Tensor, alpha: float) -> Tensor:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return ad.add(ad.scale(l_ti, 1.0 - alpha), ad.scale(l_ia, alpha))


def matching_accuracy(logits, targets) -> float:
    """Fraction of rows whose arg-max column is the target column.

    Ties go to the lowest column index. ``targets`` is an
    :class:`AffinityTargets` or an array of column indices.
    """
    scores = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    cols = targets.columns if isinstance(targets, AffinityTargets) else np.asarray(targets)
    return float(np.mean(scores.argmax(axis=1) == cols))


@dataclass
class PairBatch:
    """Consecutive-frame pairs and the action that links each pair."""

    first: np.ndarray  # (N, F)
    second: np.ndarray  # (N, F)
    action_ids: np.ndarray  # (N,)

    def __post_init__(self):
        n = len(self.action_ids)
        if self.first.shape != self.second.shape or self.first.shape[0] != n:
            raise ValueError("pair batch arrays disagree in length")
        if n < 2:
            raise ValueError("a pair batch needs at least two pairs")
        if np.any((self.action_ids >= V.NUM_MOTOR_ACTIONS) | (self.action_ids < 0)):
            raise ValueError("stop/pad actions cannot appear in a pair batch")

    def __len__(self) -> int:
        return len(self.action_ids)


def episode_pairs(episode, max_len: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All ``(frame_t, frame_t+1, action_t)`` of an episode, optionally truncated to ``max_len`` frames."""
    n = episode.n if max_len is None else min(episode.n, max_len)
    return episode.frames[: n - 1], episode.frames[1:n], episode.actions[: n - 1]


def pair_batch(episodes: Sequence, max_len: int | None = None) -> PairBatch:
    parts = [episode_pairs(ep, max_len) for ep in episodes]
    return PairBatch(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )
