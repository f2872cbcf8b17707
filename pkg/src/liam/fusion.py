"""Multimodal fusion transformer over ``[language; frames; actions; maps]`` tokens.

Each layer computes ``X <- LN(MA(X)) + X``: masked multi-head attention,
layer norm on its output, then the residual. There is no feed-forward block.

Token layout (zero-based): language ``0..m-1``, then one block of ``n`` tokens
per temporal modality in the order frames, actions, maps. Maps are optional;
without them the sequence has ``m + 2n`` tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .params import ParamStore
from .worldgen import vocab as V

LANGUAGE, FRAME, ACTION, MAP = range(4)
MODALITY_NAMES = ("language", "frame", "action", "map")


@dataclass(frozen=True)
class FusionConfig:
    d: int = 64
    heads: int = 4
    layers: int = 2
    num_actions: int = V.NUM_ACTIONS
    num_objects: int = V.NUM_OBJECTS

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"width {self.d} is not divisible by {self.heads} heads")
        if self.layers < 0:
            raise ValueError("layer count must be non-negative")


def init_fusion_params(store: ParamStore, cfg: FusionConfig) -> ParamStore:
    d = cfg.d
    std = 1.0 / np.sqrt(d)
    store.normal("fusion.type", (4, d), 0.02)
    for layer in range(cfg.layers):
        p = f"fusion.l{layer}"
        for name in ("q", "k", "v", "o"):
            store.normal(f"{p}.w{name}", (d, d), std)
            store.constant(f"{p}.b{name}", (d,), 0.0)
        store.constant(f"{p}.ln_g", (d,), 1.0)
        store.constant(f"{p}.ln_b", (d,), 0.0)
    store.normal("heads.action.w", (d, cfg.num_actions), std)
    store.constant("heads.action.b", (cfg.num_actions,), 0.0)
    store.normal("heads.object.w", (d, cfg.num_objects), std)
    store.constant("heads.object.b", (cfg.num_objects,), 0.0)
    store.normal("heads.gp.w", (d, 1), std)
    store.constant("heads.gp.b", (1,), 0.0)
    return store


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """``PE[p, 2i] = sin(p / 10000^(2i/d))``, ``PE[p, 2i+1] = cos(...)``."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 1.0 / np.power(10000.0, np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates[: d // 2])
    return pe


def _encode_block(params, feats: Tensor, modality: int) -> Tensor:
    n, d = feats.shape
    type_vec = ad.take(params["fusion.type"], modality)
    pe = Tensor(sinusoidal_positions(n, d).astype(feats.dtype))
    return ad.add(ad.add_bias(feats, type_vec), pe)


def apply_encodings(params, F_L: Tensor, F_I: Tensor, F_A: Tensor, F_M: Tensor | None = None) -> Tensor:
    """Add modality-type and sinusoidal position encodings, then concatenate.

    Positions restart at 0 in every modality, so the frame, action and map of
    step ``t`` share position ``t``.
    """
    temporal = [F_I, F_A] + ([F_M] if F_M is not None else [])
    n = F_I.shape[0]
    if n < 1:
        raise ShapeError("need at least one time step")
    d = F_L.shape[1]
    for t in temporal:
        if t.shape != (n, d):
            raise ShapeError(f"temporal modality of shape {t.shape}, expected ({n}, {d})")
    blocks = [_encode_block(params, F_L, LANGUAGE)]
    for feats, mod in zip(temporal, (FRAME, ACTION, MAP)):
        blocks.append(_encode_block(params, feats, mod))
    return ad.concat(blocks, axis=0)


def token_layout(m: int, n: int, with_map: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Modality code and time step of every token."""
    temporal = (FRAME, ACTION, MAP) if with_map else (FRAME, ACTION)
    mods = np.concatenate([np.full(m, LANGUAGE)] + [np.full(n, k) for k in temporal])
    steps = np.concatenate([np.arange(m)] + [np.arange(n)] * len(temporal))
    return mods, steps


def build_causal_mask(m: int, n: int, with_map: bool = True) -> np.ndarray:
    """Boolean ``(T, T)`` attention mask, True where query row may attend key column.

    Language attends only to language. A frame, action or map token at step
    ``t`` attends to all language, to frames and maps at steps ``<= t``, and to
    actions at steps ``< t``.
    """
    if m < 1 or n < 1:
        raise ValueError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    mods, steps = token_layout(m, n, with_map)
    q_lang = (mods == LANGUAGE)[:, None]
    k_lang = (mods == LANGUAGE)[None, :]
    k_action = (mods == ACTION)[None, :]
    qs, ks = steps[:, None], steps[None, :]
    temporal_ok = np.where(k_action, ks < qs, ks <= qs)
    return np.where(q_lang, k_lang, k_lang | temporal_ok)


def format_mask(mask: np.ndarray, m: int, n: int, with_map: bool = True) -> str:
    """Text grid of a mask: one row per query token, ``#`` = allowed, ``.`` = blocked."""
    mods, steps = token_layout(m, n, with_map)
    labels = [f"{'LIAM'[k]}{s}" for k, s in zip(mods, steps)]
    width = max(len(s) for s in labels)
    lines = [" " * (width + 1) + " ".join(lab[0] for lab in labels)]
    for lab, row in zip(labels, mask):
        lines.append(lab.rjust(width) + " " + " ".join("#" if a else "." for a in row))
    return "\n".join(lines)


def multi_head_attention(params, prefix: str, x: Tensor, mask: np.ndarray, heads: int) -> Tensor:
    T, d = x.shape
    if mask.shape != (T, T):
        raise ShapeError(f"mask {mask.shape} does not match {T} tokens")
    dh = d // heads
    q = ad.add_bias(x @ params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = ad.add_bias(x @ params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = ad.add_bias(x @ params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    outs = []
    for h in range(heads):
        cols = (slice(None), slice(h * dh, (h + 1) * dh))
        scores = ad.scale(ad.take(q, cols) @ ad.transpose(ad.take(k, cols)), 1.0 / np.sqrt(dh))
        outs.append(ad.softmax(scores, mask) @ ad.take(v, cols))
    joined = outs[0] if heads == 1 else ad.concat(outs, axis=1)
    return ad.add_bias(joined @ params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def fuse(params, encoded: Tensor, mask: np.ndarray, layers: int, heads: int) -> Tensor:
    x = encoded
    for layer in range(layers):
        p = f"fusion.l{layer}"
        attn = multi_head_attention(params, p, x, mask, heads)
        x = ad.add(ad.layer_norm(attn, params[f"{p}.ln_g"], params[f"{p}.ln_b"]), x)
    return x


def slice_visual(fused: Tensor, m: int, n: int) -> Tensor:
    """Frame-token rows ``[m, m + n)``."""
    if fused.shape[0] < m + n:
        raise ShapeError(f"{fused.shape[0]} tokens cannot hold m={m} language and n={n} frame tokens")
    return ad.take(fused, slice(m, m + n))


def predict_heads(params, visual: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Row-wise action logits ``(n, 14)``, object logits ``(n, 85)`` and goal progress ``(n,)`` in (0, 1)."""
    action = ad.add_bias(visual @ params["heads.action.w"], params["heads.action.b"])
    obj = ad.add_bias(visual @ params["heads.object.w"], params["heads.object.b"])
    gp = ad.sigmoid(ad.add_bias(visual @ params["heads.gp.w"], params["heads.gp.b"]))
    return action, obj, ad.reshape(gp, (visual.shape[0],))
