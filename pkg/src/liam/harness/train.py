"""Training loops: pair pretraining, triple pretraining and end-to-end training.

Every step draws its batch from ``default_rng([seed, step])``, so a run
resumed from a checkpoint at step ``k`` sees exactly the batches the
uninterrupted run would have seen from step ``k`` on.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import autodiff as ad
from ..contrastive import (build_affinity_targets, loss_image_action, loss_text_image, loss_triple,
                           pair_batch, similarity_logits)
from ..encoders import embed_actions, encode_frames, fuse_frame_pairs
from ..losses import action_loss, goal_progress_loss, goal_progress_targets, object_loss, total_loss
from ..model import build_params, forward_episode
from ..params import ParamStore
from ..worldgen.episodes import Episode
from ..worldgen.vocab import PAD
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, dump_config
from .evaluate import evaluate_matching, evaluate_sequences, sequence_reps, text_reps
from .metrics import MetricsWriter
from .optim import compute_grads, make_optimizer

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "step", "split", "loss", "loss_action", "loss_object", "loss_gp", "loss_ia", "loss_ti",
    "accuracy", "macro_f1", "i2a_acc", "i2a_chance", "t2i_acc", "tau_ia", "tau_ti",
)


@dataclass
class PairPool:
    """Every consecutive-frame pair of a dataset, flattened."""

    first: np.ndarray
    second: np.ndarray
    action_ids: np.ndarray

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode], max_len: int | None = None) -> "PairPool":
        b = pair_batch(episodes, max_len)
        return cls(b.first, b.second, b.action_ids)

    def __len__(self) -> int:
        return len(self.action_ids)


@dataclass
class RunResult:
    params: ParamStore
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0


# ---------------------------------------------------------------------------
# Per-stage losses


def pair_loss(params, first, second, action_ids) -> tuple[ad.Tensor, ad.Tensor]:
    """Image-action loss and logits for one batch of frame pairs."""
    targets = build_affinity_targets(action_ids)
    reps = fuse_frame_pairs(params, encode_frames(params, first), encode_frames(params, second))
    logits = similarity_logits(reps, embed_actions(params, targets.unique_actions), params["temperature.ia"])
    return loss_image_action(logits, targets), logits


def triple_losses(params, episodes: Sequence[Episode], cap: int) -> tuple[ad.Tensor, ad.Tensor]:
    """Text-image loss over the batch and image-action loss over its pooled pairs."""
    text, seqs = text_reps(params, episodes), sequence_reps(params, episodes, cap)
    l_ti = loss_text_image(text, seqs, params["temperature.ti"])
    pool = pair_batch(episodes, cap)
    l_ia, _ = pair_loss(params, pool.first, pool.second, pool.action_ids)
    return l_ti, l_ia


def e2e_losses(params, cfg: TrainConfig, episodes: Sequence[Episode]):
    """Teacher-forced losses over the rows of all episodes, concatenated."""
    acts, objs, gps = [], [], []
    for ep in episodes:
        a, o, g = forward_episode(params, cfg.model, ep, map_enabled=cfg.map_enabled)
        acts.append(a)
        objs.append(o)
        gps.append(g)
    action_logits = ad.concat(acts, axis=0) if len(acts) > 1 else acts[0]
    object_logits = ad.concat(objs, axis=0) if len(objs) > 1 else objs[0]
    gp = ad.concat(gps, axis=0) if len(gps) > 1 else gps[0]
    targets = np.concatenate([ep.actions for ep in episodes])
    pad = targets == PAD
    l_a = action_loss(action_logits, targets, pad)
    l_o = object_loss(object_logits, np.concatenate([ep.objects for ep in episodes]), pad)
    l_g = goal_progress_loss(gp, np.concatenate([goal_progress_targets(ep.n) for ep in episodes]), pad)
    loss = total_loss(l_a, l_o, l_g, cfg.aux_object_weight, cfg.aux_gp_weight)
    return loss, l_a, l_o, l_g, action_logits.data.argmax(axis=1), targets


# ---------------------------------------------------------------------------
# Driver


def _taus(params) -> dict[str, float]:
    return {"tau_ia": float(params["temperature.ia"].data[0]), "tau_ti": float(params["temperature.ti"].data[0])}


def init_run(cfg: TrainConfig, init: Checkpoint | str | None = None, resume: Checkpoint | str | None = None):
    """Parameters, optimizer and first step for a run, honouring ``init`` / ``resume``."""
    params = build_params(cfg.model, cfg.seed)
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.freeze)
    start = 0
    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        ckpt.check_model(cfg.model_hash())
        ckpt.check_resume(cfg.config_hash())
        params.load_arrays(ckpt.tensors)
        opt.load_state_arrays(ckpt.optimizer, ckpt.step)
        start = ckpt.step
    elif init is not None:
        ckpt = load_checkpoint(init) if not isinstance(init, Checkpoint) else init
        ckpt.check_model(cfg.model_hash())
        params.load_arrays(ckpt.tensors)
    return params, opt, start


def make_checkpoint(cfg: TrainConfig, params: ParamStore, opt, step: int) -> Checkpoint:
    return Checkpoint(
        tensors={k: v.copy() for k, v in params.arrays().items()},
        stage=cfg.stage,
        config_hash=cfg.config_hash(),
        model_hash=cfg.model_hash(),
        step=step,
        config=cfg.to_dict(),
        optimizer={k: v.copy() for k, v in opt.state_arrays().items()},
    )


def run_training(
    cfg: TrainConfig,
    train: Sequence[Episode],
    evals: dict[str, Sequence[Episode]] | None = None,
    *,
    init: Checkpoint | str | None = None,
    resume: Checkpoint | str | None = None,
    out_dir: str | Path | None = None,
    stop_when: Callable[[dict], bool] | None = None,
) -> RunResult:
    """Train ``cfg.stage`` for ``cfg.steps`` steps (counted from 0, including resumed ones).

    ``evals`` maps split names to held-out episodes evaluated every
    ``eval_every`` steps and after the last step. ``stop_when`` receives each
    evaluation row and may end training early. With ``out_dir`` set, the
    metrics CSV, resolved config and final checkpoint are written there.
    """
    if not train:
        raise ValueError("empty training set")
    evals = evals or {}
    t0 = time.perf_counter()
    params, opt, start = init_run(cfg, init, resume)
    writer = None
    if out_dir is not None:
        out = Path(out_dir)
        dump_config(cfg, out / "config.yaml")
        writer = MetricsWriter(out / "metrics.csv", METRIC_COLUMNS)
    history: list[dict] = []

    def emit(row: dict) -> None:
        history.append(row)
        if writer is not None:
            writer.write(row)

    pool = PairPool.from_episodes(train) if cfg.stage == "pair" else None
    eval_pools = {k: PairPool.from_episodes(v) for k, v in evals.items()} if cfg.stage != "e2e" else {}

    def evaluate(step: int) -> bool:
        done = False
        for split, episodes in evals.items():
            row = {"step": step, "split": split, **_taus(params)}
            if cfg.stage == "e2e":
                res = evaluate_sequences(params, cfg, episodes, mode="teacher-forced")
                row.update(accuracy=res["accuracy"], macro_f1=res["macro_f1"])
            else:
                res = evaluate_matching(params, eval_pools[split], episodes, cfg, text=cfg.stage == "triple")
                row.update(i2a_acc=res["i2a_acc"], i2a_chance=res["i2a_chance"])
                if "t2i_acc" in res:
                    row["t2i_acc"] = res["t2i_acc"]
            emit(row)
            if stop_when is not None and stop_when(row):
                done = True
        return done

    if start == 0 and evals:
        evaluate(0)
    step = start
    while step < cfg.steps:
        rng = np.random.default_rng([cfg.seed, step])
        row = {"step": step + 1, "split": "train"}
        if cfg.stage == "pair":
            idx = rng.choice(len(pool), size=min(cfg.pair_batch_size, len(pool)), replace=False)
            loss, _ = pair_loss(params, pool.first[idx], pool.second[idx], pool.action_ids[idx])
            row["loss_ia"] = loss.item()
        elif cfg.stage == "triple":
            idx = rng.choice(len(train), size=min(cfg.triple_batch_size, len(train)), replace=False)
            l_ti, l_ia = triple_losses(params, [train[i] for i in idx], cfg.seq_cap)
            loss = loss_triple(l_ti, l_ia, cfg.triple_alpha)
            row.update(loss_ti=l_ti.item(), loss_ia=l_ia.item())
        else:
            idx = rng.choice(len(train), size=min(cfg.e2e_batch_size, len(train)), replace=False)
            loss, l_a, l_o, l_g, pred, tgt = e2e_losses(params, cfg, [train[i] for i in np.sort(idx)])
            row.update(loss_action=l_a.item(), loss_object=l_o.item(), loss_gp=l_g.item())
        grads = compute_grads(params, loss)
        opt.step(grads)
        step += 1
        row["loss"] = loss.item()
        row.update(_taus(params))
        emit(row)
        if evals and (step % cfg.eval_every == 0 or step == cfg.steps):
            if evaluate(step):
                break
    ckpt = make_checkpoint(cfg, params, opt, step)
    if out_dir is not None:
        save_checkpoint(ckpt, Path(out_dir) / "checkpoint.bin")
    return RunResult(params, ckpt, history, time.perf_counter() - t0)


def pretrain(cfg: TrainConfig, train, evals=None, **kwargs) -> RunResult:
    if cfg.stage not in ("pair", "triple"):
        raise ValueError(f"pretrain needs stage pair or triple, got {cfg.stage!r}")
    return run_training(cfg, train, evals, **kwargs)


def train_e2e(cfg: TrainConfig, train, evals=None, **kwargs) -> RunResult:
    if cfg.stage != "e2e":
        raise ValueError(f"train_e2e needs stage e2e, got {cfg.stage!r}")
    return run_training(cfg, train, evals, **kwargs)
