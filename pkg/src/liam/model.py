"""Encoders + fusion transformer + heads, wired together per episode."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .contrastive import TAU_INIT
from .encoders import (EncoderConfig, embed_actions, encode_frames, encode_maps, encode_text,
                       init_encoder_params)
from .fusion import (FusionConfig, apply_encodings, build_causal_mask, fuse, init_fusion_params,
                     predict_heads, slice_visual)
from .params import ParamStore
from .worldgen.world import WorldConfig


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    frame_hidden: int = 128
    heads: int = 4
    layers: int = 2
    world: WorldConfig = field(default_factory=WorldConfig)

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            d=self.d,
            frame_feature_len=self.world.frame_feature_len,
            frame_hidden=self.frame_hidden,
            map_channels=self.world.map_channels,
            map_extent=self.world.width,
        )

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(d=self.d, heads=self.heads, layers=self.layers)


def build_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ParamStore:
    """All learnable tensors, including both temperatures.

    Map parameters exist whether or not maps are used, so switching maps off
    changes nothing about the other parameters' initial values.
    """
    if cfg.world.width != cfg.world.height:
        raise ValueError("semantic maps assume a square world")
    store = ParamStore(seed, dtype)
    init_encoder_params(store, cfg.encoder)
    init_fusion_params(store, cfg.fusion)
    store.constant("temperature.ia", (1,), TAU_INIT)
    store.constant("temperature.ti", (1,), TAU_INIT)
    return store


@dataclass
class FusionInput:
    """Encoded token sequence ``[L; I; A; (M)]`` plus its attention mask."""

    tokens: Tensor
    mask: np.ndarray
    m: int
    n: int


def build_fusion_input(params, cfg: ModelConfig, tokens, frames, actions, maps=None) -> FusionInput:
    """Encode every modality and lay out the fusion sequence.

    Frame and action embeddings are unit vectors; they are scaled by
    ``sqrt(d)`` so their entries are on the same order as the positional code.
    ``maps=None`` drops the map tokens entirely.
    """
    per_token, _ = encode_text(params, tokens)
    n = len(actions)
    if len(frames) != n or (maps is not None and len(maps) != n):
        raise ValueError("frames, actions and maps must have the same length")
    gain = float(np.sqrt(cfg.d))
    f_i = ad.scale(encode_frames(params, frames), gain)
    f_a = ad.scale(embed_actions(params, actions), gain)
    f_m = encode_maps(params, maps) if maps is not None else None
    encoded = apply_encodings(params, per_token, f_i, f_a, f_m)
    mask = build_causal_mask(per_token.shape[0], n, with_map=maps is not None)
    return FusionInput(encoded, mask, per_token.shape[0], n)


def forward(params, cfg: ModelConfig, tokens, frames, actions, maps=None) -> tuple[Tensor, Tensor, Tensor]:
    """Action logits, object logits and goal progress for every time step."""
    inp = build_fusion_input(params, cfg, tokens, frames, actions, maps)
    fused = fuse(params, inp.tokens, inp.mask, cfg.layers, cfg.heads)
    return predict_heads(params, slice_visual(fused, inp.m, inp.n))


def forward_episode(params, cfg: ModelConfig, episode, map_enabled: bool = True, actions=None):
    """Teacher-forced forward pass; ``actions`` overrides the action inputs."""
    acts = episode.actions if actions is None else actions
    maps = episode.maps if map_enabled else None
    return forward(params, cfg, episode.tokens, episode.frames, acts, maps)
