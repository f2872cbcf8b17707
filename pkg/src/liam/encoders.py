"""Modality encoders. Each one ends in the shared embedding width ``d``.

* text: token embedding, linear projection, mean pooling for the sequence vector
* frame: two-layer GELU MLP over the ego-centric observation, unit-normalised
* action: a 14-row embedding table, unit-normalised for similarity use
* map: flatten, linear, GELU
* frame pair: width-2 convolution over two frame embeddings, pooled and normalised
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .params import ParamStore
from .worldgen import vocab as V
from .worldgen.world import WorldConfig


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 64
    vocab_size: int = V.VOCAB_SIZE
    frame_feature_len: int = WorldConfig().frame_feature_len
    frame_hidden: int = 128
    map_channels: int = WorldConfig().map_channels
    map_extent: int = WorldConfig().width
    num_actions: int = V.NUM_ACTIONS
    num_objects: int = V.NUM_OBJECTS

    def __post_init__(self):
        if self.num_actions != 14:
            raise ValueError("the action space is 12 motor/interaction classes + stop + pad = 14")
        if self.num_objects != 85:
            raise ValueError("the object space is 84 classes + NoObject = 85")
        if min(self.d, self.vocab_size, self.frame_feature_len, self.frame_hidden,
               self.map_channels, self.map_extent) < 1:
            raise ValueError("encoder dimensions must be positive")

    @property
    def map_len(self) -> int:
        return self.map_channels * self.map_extent * self.map_extent


def init_encoder_params(store: ParamStore, cfg: EncoderConfig) -> ParamStore:
    d, h = cfg.d, cfg.frame_hidden
    store.normal("text.embed", (cfg.vocab_size, d), 1.0)
    store.normal("text.w", (d, d), 1.0 / np.sqrt(d))
    store.normal("text.b", (d,), 0.02)
    store.normal("frame.w1", (cfg.frame_feature_len, h), 1.0 / np.sqrt(16))
    store.normal("frame.b1", (h,), 0.02)
    store.normal("frame.w2", (h, d), 1.0 / np.sqrt(h))
    store.normal("frame.b2", (d,), 0.02)
    store.normal("action.embed", (cfg.num_actions, d), 1.0)
    store.normal("pair.w", (2, d, d), 1.0 / np.sqrt(2 * d))
    store.normal("pair.b", (d,), 0.02)
    store.normal("map.w", (cfg.map_len, d), 1.0 / np.sqrt(64))
    store.normal("map.b", (d,), 0.02)
    return store


def encode_text(params, tokens) -> tuple[Tensor, Tensor]:
    """Per-token features ``(m, d)`` and the unit-norm mean over tokens ``(d,)``."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ValueError("instruction must be a non-empty 1-D token sequence")
    emb = ad.embedding(params["text.embed"], tokens)
    per_token = ad.add_bias(emb @ params["text.w"], params["text.b"])
    return per_token, ad.l2_normalize(ad.mean(per_token, axis=0))


def encode_frames(params, obs) -> Tensor:
    """``(n, frame_feature_len)`` observations to ``(n, d)`` unit vectors."""
    x = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=params["frame.w1"].dtype))
    if x.ndim != 2 or x.shape[1] != params["frame.w1"].shape[0]:
        raise ShapeError(f"frame observations of shape {x.shape}, expected (n, {params['frame.w1'].shape[0]})")
    hidden = ad.gelu(ad.add_bias(x @ params["frame.w1"], params["frame.b1"]))
    return ad.l2_normalize(ad.add_bias(hidden @ params["frame.w2"], params["frame.b2"]))


def encode_frame(params, obs) -> Tensor:
    obs = np.asarray(obs)
    if obs.ndim != 1:
        raise ShapeError(f"single observation must be 1-D, got shape {obs.shape}")
    out = encode_frames(params, obs[None, :])
    return ad.reshape(out, (out.shape[1],))


def encode_sequence(params, frames, cap: int | None = None) -> Tensor:
    """Unit-norm mean of the frame embeddings of one episode, first ``cap`` frames only."""
    frames = np.asarray(frames)[:cap]
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    return ad.l2_normalize(ad.mean(encode_frames(params, frames), axis=0))


def embed_actions(params, ids) -> Tensor:
    """Unit-normalised rows of the action table, ``(len(ids), d)``."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    return ad.l2_normalize(ad.embedding(params["action.embed"], ids))


def embed_action(params, action_id: int) -> Tensor:
    rows = params["action.embed"].shape[0]
    if not 0 <= int(action_id) < rows:
        raise IndexError(f"action id {action_id} outside [0, {rows})")
    out = embed_actions(params, [action_id])
    return ad.reshape(out, (out.shape[1],))


def encode_maps(params, grids) -> Tensor:
    """``(n, channels, extent, extent)`` maps to ``(n, d)`` via flatten, linear, GELU."""
    g = grids.data if isinstance(grids, Tensor) else np.asarray(grids, dtype=params["map.w"].dtype)
    in_len = params["map.w"].shape[0]
    if g.ndim != 4 or int(np.prod(g.shape[1:])) != in_len:
        raise ShapeError(f"map grids of shape {g.shape} do not flatten to {in_len}")
    if not np.all(np.isfinite(g)):
        raise ValueError("map grid contains non-finite values")
    flat = Tensor(g.reshape(g.shape[0], in_len).astype(params["map.w"].dtype, copy=False))
    return ad.gelu(ad.add_bias(flat @ params["map.w"], params["map.b"]))


def encode_map(params, grid) -> Tensor:
    grid = np.asarray(grid)
    out = encode_maps(params, grid[None])
    return ad.reshape(out, (out.shape[1],))


def fuse_frame_pairs(params, first: Tensor, second: Tensor) -> Tensor:
    """Fuse consecutive frame embeddings ``(N, d)`` and ``(N, d)`` into ``(N, d)`` unit vectors.

    The two embeddings form a length-2 sequence with ``d`` channels; a width-2
    convolution sees both at once, so the result depends on their order.
    """
    if first.shape != second.shape or first.ndim != 2:
        raise ShapeError(f"frame pair shapes differ: {first.shape} vs {second.shape}")
    n, d = first.shape
    seq = ad.concat([ad.reshape(first, (n, 1, d)), ad.reshape(second, (n, 1, d))], axis=1)
    conv = ad.conv1d(seq, params["pair.w"], params["pair.b"])  # (N, 1, d)
    return ad.l2_normalize(ad.global_avg_pool(conv, axis=1))


def fuse_frame_pair(params, e_t: Tensor, e_t1: Tensor) -> Tensor:
    if e_t.shape != e_t1.shape or e_t.ndim != 1:
        raise ShapeError(f"frame pair shapes differ: {e_t.shape} vs {e_t1.shape}")
    d = e_t.shape[0]
    out = fuse_frame_pairs(params, ad.reshape(e_t, (1, d)), ad.reshape(e_t1, (1, d)))
    return ad.reshape(out, (d,))
