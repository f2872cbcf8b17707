"""Training configuration: YAML file + ``key=value`` overrides, validated on load."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import yaml

from ..model import ModelConfig
from ..params import GROUPS
from ..worldgen.world import WorldConfig

STAGES = ("pair", "triple", "e2e")
OPTIMIZERS = ("sgd", "adam")
DATA_DIR_ENV = "LIAM_DATA_DIR"

# fields that may change between a run and its resumption
_RESUMABLE = frozenset({"steps", "eval_every", "out_dir", "train_data", "eval_data"})
_ARCHITECTURE = ("d", "frame_hidden", "heads", "layers", "world_width", "world_height", "view")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    stage: str = "e2e"
    seed: int = 0
    # architecture
    d: int = 64
    frame_hidden: int = 128
    heads: int = 4
    layers: int = 2
    world_width: int = 8
    world_height: int = 8
    view: int = 3
    # optimisation
    optimizer: str = "sgd"
    lr: float = 0.05
    steps: int = 1000
    pair_batch_size: int = 64
    triple_batch_size: int = 3
    e2e_batch_size: int = 8
    seq_cap: int = 21
    triple_alpha: float = 0.8
    aux_object_weight: float = 0.1
    aux_gp_weight: float = 0.1
    freeze: list[str] = field(default_factory=list)
    map_enabled: bool = True
    # evaluation and I/O
    eval_every: int = 100
    eval_pairs: int = 2000
    out_dir: str = "runs/default"
    train_data: str = "train.jsonl"
    eval_data: list[str] = field(default_factory=lambda: ["seen.jsonl", "unseen.jsonl"])

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        need(self.stage in STAGES, f"stage must be one of {STAGES}, got {self.stage!r}")
        need(self.optimizer in OPTIMIZERS, f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        for name in ("d", "frame_hidden", "heads", "world_width", "world_height", "view",
                     "pair_batch_size", "e2e_batch_size", "seq_cap", "eval_every", "eval_pairs"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 1, f"{name} must be a positive integer")
        need(isinstance(self.layers, int) and self.layers >= 0, "layers must be a non-negative integer")
        need(isinstance(self.steps, int) and self.steps >= 0, "steps must be a non-negative integer")
        need(self.pair_batch_size >= 2, "pair_batch_size must be at least 2")
        need(isinstance(self.triple_batch_size, int) and self.triple_batch_size >= 2,
             "triple_batch_size must be at least 2")
        need(self.seq_cap >= 2, "seq_cap must be at least 2")
        need(self.d % self.heads == 0, "d must be divisible by heads")
        need(self.lr > 0, "lr must be positive")
        need(0.0 <= self.triple_alpha <= 1.0, "triple_alpha must lie in [0, 1]")
        need(self.aux_object_weight >= 0 and self.aux_gp_weight >= 0, "auxiliary weights must be non-negative")
        need(isinstance(self.freeze, list) and all(g in GROUPS for g in self.freeze),
             f"freeze entries must be parameter groups {GROUPS}")
        need(isinstance(self.map_enabled, bool), "map_enabled must be a boolean")
        need(isinstance(self.eval_data, list), "eval_data must be a list of paths")

    @property
    def model(self) -> ModelConfig:
        world = WorldConfig(width=self.world_width, height=self.world_height, view=self.view)
        return ModelConfig(d=self.d, frame_hidden=self.frame_hidden, heads=self.heads,
                           layers=self.layers, world=world)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of everything that determines a training trajectory."""
        keep = {k: v for k, v in self.to_dict().items() if k not in _RESUMABLE}
        return _digest(keep)

    def model_hash(self) -> str:
        """Hash of the fields that fix parameter names and shapes."""
        return _digest({k: getattr(self, k) for k in _ARCHITECTURE})

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def resolve_path(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or p.exists():
            return p
        return Path(os.environ.get(DATA_DIR_ENV, ".")) / p


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _coerce(name: str, raw: str):
    field_types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    if name not in field_types:
        raise ConfigError(f"unknown config key {name!r}")
    value = yaml.safe_load(raw) if raw != "" else ""
    if field_types[name] in ("float",) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if field_types[name] == "list[str]" and isinstance(value, str):
        value = [v for v in value.split(",") if v]
    if field_types[name] == "str" and not isinstance(value, str):
        value = str(raw)
    return value


def from_dict(values: dict[str, Any], overrides: Iterable[str] = ()) -> TrainConfig:
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    merged = dict(values)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        merged[key.strip()] = _coerce(key.strip(), raw.strip())
    for key, value in list(merged.items()):
        if key in ("lr", "triple_alpha", "aux_object_weight", "aux_gp_weight") and isinstance(value, int) \
                and not isinstance(value, bool):
            merged[key] = float(value)
    try:
        return TrainConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike | None = None, overrides: Iterable[str] = ()) -> TrainConfig:
    values: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        values = loaded
    return from_dict(values, overrides)


def dump_config(config: TrainConfig, path: str | os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
