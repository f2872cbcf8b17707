"""Evaluation: matching accuracy, per-step action metrics, rollout, chance baselines, map ablation."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..contrastive import build_affinity_targets, similarity_logits
from ..encoders import embed_actions, encode_frames, encode_sequence, encode_text, fuse_frame_pairs
from ..model import build_params, forward, forward_episode
from ..params import param_rng
from ..worldgen.episodes import Episode
from ..worldgen.vocab import NUM_ACTIONS, PAD, STOP
from .metrics import MetricsWriter, accuracy, macro_f1

EVAL_SHUFFLE_SEED = 0


def _eval_order(count: int, limit: int) -> np.ndarray:
    """Fixed shuffle of the held-out pairs so batches mix episodes."""
    return np.random.default_rng(EVAL_SHUFFLE_SEED).permutation(count)[:limit]


def _pair_batches(pool, batch_size: int, limit: int):
    order = _eval_order(len(pool), limit)
    for b in range(0, len(order), batch_size):
        idx = order[b:b + batch_size]
        if len(idx) >= 2:
            yield idx


def _rows(vectors: list) -> ad.Tensor:
    return ad.concat([ad.reshape(v, (1, v.shape[0])) for v in vectors], axis=0)


def sequence_reps(params, episodes, cap: int) -> ad.Tensor:
    """``(B, d)`` unit-norm frame-sequence representations."""
    return _rows([encode_sequence(params, ep.frames, cap) for ep in episodes])


def text_reps(params, episodes) -> ad.Tensor:
    """``(B, d)`` unit-norm instruction representations."""
    return _rows([encode_text(params, ep.tokens)[1] for ep in episodes])


def i2a_accuracy(params, pool, batch_size: int, limit: int) -> tuple[float, float, int]:
    """Matching accuracy over held-out frame pairs, its chance level and the pair count."""
    hits, chance = [], []
    for idx in _pair_batches(pool, batch_size, limit):
        targets = build_affinity_targets(pool.action_ids[idx])
        reps = fuse_frame_pairs(params, encode_frames(params, pool.first[idx]), encode_frames(params, pool.second[idx]))
        logits = similarity_logits(reps, embed_actions(params, targets.unique_actions), params["temperature.ia"])
        hits.append(logits.data.argmax(axis=1) == targets.columns)
        chance.append(np.full(len(idx), 1.0 / len(targets.unique_actions)))
    if not hits:
        raise ValueError("no held-out pairs to evaluate")
    hits, chance = np.concatenate(hits), np.concatenate(chance)
    return float(hits.mean()), float(chance.mean()), len(hits)


def t2i_accuracy(params, episodes: Sequence[Episode], batch_size: int, cap: int) -> float:
    """Text-to-sequence matching accuracy over consecutive groups of ``batch_size`` episodes."""
    hits = []
    for b in range(0, len(episodes) - batch_size + 1, batch_size):
        group = episodes[b:b + batch_size]
        logits = similarity_logits(text_reps(params, group), sequence_reps(params, group, cap),
                                   params["temperature.ti"])
        hits.append(logits.data.argmax(axis=1) == np.arange(batch_size))
    if not hits:
        raise ValueError(f"need at least {batch_size} held-out episodes")
    return float(np.concatenate(hits).mean())


def evaluate_matching(params, pool, episodes, cfg, text: bool = False) -> dict[str, float]:
    acc, chance, count = i2a_accuracy(params, pool, cfg.pair_batch_size, cfg.eval_pairs)
    out = {"i2a_acc": acc, "i2a_chance": chance, "pairs": count}
    if text:
        out["t2i_acc"] = t2i_accuracy(params, episodes, cfg.triple_batch_size, cfg.seq_cap)
    return out


# ---------------------------------------------------------------------------
# Action sequences


def predict_teacher_forced(params, cfg, episode: Episode) -> np.ndarray:
    logits, _, _ = forward_episode(params, cfg.model, episode, map_enabled=cfg.map_enabled)
    return logits.data.argmax(axis=1)


def predict_rollout(params, cfg, episode: Episode) -> np.ndarray:
    """Autoregressive decoding: each predicted action becomes the next step's action input.

    Frames and maps are the expert's (open loop). Decoding stops after a
    predicted stop or once the expert's frames run out; unproduced positions
    are filled with pad and so count as errors.
    """
    out = np.full(episode.n, PAD, dtype=np.int64)
    fed: list[int] = []
    for t in range(episode.n):
        # the action slot at step t is invisible to step t, so its value is irrelevant
        acts = np.array(fed + [PAD], dtype=np.int64)
        maps = episode.maps[: t + 1] if cfg.map_enabled else None
        logits, _, _ = forward(params, cfg.model, episode.tokens, episode.frames[: t + 1], acts, maps)
        a = int(logits.data[t].argmax())
        out[t] = a
        if a == STOP:
            break
        fed.append(a)
    return out


def evaluate_sequences(params, cfg, episodes: Sequence[Episode], mode: str = "teacher-forced") -> dict:
    """Accuracy and macro-F1 of predicted actions against the expert transcripts."""
    if not episodes:
        raise ValueError("empty evaluation set")
    if mode == "teacher-forced":
        predict = predict_teacher_forced
    elif mode == "rollout":
        predict = predict_rollout
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    preds = np.concatenate([predict(params, cfg, ep) for ep in episodes])
    targets = np.concatenate([ep.actions for ep in episodes])
    return {"accuracy": accuracy(preds, targets), "macro_f1": macro_f1(preds, targets),
            "positions": int(np.sum(targets != PAD)), "episodes": len(episodes)}


# ---------------------------------------------------------------------------
# Chance baselines


def zero_shot_chance(cfg, pool, episodes: Sequence[Episode], seed: int = 0) -> dict[str, float]:
    """Matching accuracy of untrained encoders.

    A single random action table favours whichever action its geometry
    happens to prefer, and the action distribution is far from uniform, so
    one initialisation's I2A accuracy is not centred on ``1/U``. The chance
    figure ``i2a_acc`` therefore marginalises over the action-table
    initialisation: each evaluated pair is scored against a freshly drawn
    table. ``i2a_acc_single_init`` is the plain single-initialisation number.
    """
    params = build_params(cfg.model, seed)
    d = cfg.d
    hits, single, chance = [], [], []
    for b, idx in enumerate(_pair_batches(pool, cfg.pair_batch_size, cfg.eval_pairs)):
        targets = build_affinity_targets(pool.action_ids[idx])
        reps = fuse_frame_pairs(params, encode_frames(params, pool.first[idx]), encode_frames(params, pool.second[idx]))
        logits = similarity_logits(reps, embed_actions(params, targets.unique_actions), params["temperature.ia"])
        single.append(logits.data.argmax(axis=1) == targets.columns)
        for i in range(len(idx)):
            table = param_rng(seed, f"action.embed/redraw/{b}/{i}").normal(0.0, 1.0, size=(NUM_ACTIONS, d))
            cols = table[targets.unique_actions]
            cols /= np.linalg.norm(cols, axis=1, keepdims=True)
            hits.append(int((cols @ reps.data[i]).argmax() == targets.columns[i]))
        chance.append(np.full(len(idx), 1.0 / len(targets.unique_actions)))
    chance = np.concatenate(chance)
    n = len(chance)
    sigma = float(np.sqrt(np.sum(chance * (1 - chance))) / n)
    acc = float(np.mean(hits))
    p = float(chance.mean())
    out = {"i2a_acc": acc, "i2a_chance": p, "i2a_sigma": sigma, "i2a_z": (acc - p) / sigma, "pairs": n,
           "i2a_acc_single_init": float(np.concatenate(single).mean())}
    if len(episodes) >= cfg.triple_batch_size:
        b = cfg.triple_batch_size
        t2i = t2i_accuracy(params, episodes, b, cfg.seq_cap)
        rows = (len(episodes) // b) * b
        s = float(np.sqrt((1 / b) * (1 - 1 / b) / rows))
        out.update(t2i_acc=t2i, t2i_chance=1 / b, t2i_sigma=s, t2i_z=(t2i - 1 / b) / s, t2i_rows=rows)
    return out


# ---------------------------------------------------------------------------
# Map ablation

ABLATION_COLUMNS = ("map_enabled", "split", "accuracy", "macro_f1", "positions")


def map_ablation(cfg, train: Sequence[Episode], splits: dict[str, Sequence[Episode]],
                 out_dir: str | Path | None = None, init=None) -> list[dict]:
    """Train with and without map tokens, then score both models on every split.

    Returns one row per (map setting, split) cell. Both runs share the seed,
    data and every other setting.
    """
    from .train import train_e2e

    rows = []
    for enabled in (True, False):
        run_cfg = replace(cfg, stage="e2e", map_enabled=enabled)
        sub = None if out_dir is None else Path(out_dir) / ("map_on" if enabled else "map_off")
        result = train_e2e(run_cfg, train, init=init, out_dir=sub)
        for split, episodes in splits.items():
            res = evaluate_sequences(result.params, run_cfg, episodes)
            rows.append({"map_enabled": enabled, "split": split, "accuracy": res["accuracy"],
                         "macro_f1": res["macro_f1"], "positions": res["positions"]})
    if out_dir is not None:
        MetricsWriter(Path(out_dir) / "ablation.csv", ABLATION_COLUMNS).write_all(rows)
    return rows


def format_grid(rows: list[dict]) -> str:
    splits = list(dict.fromkeys(r["split"] for r in rows))
    lines = ["map      " + "  ".join(f"{s:>20}" for s in splits)]
    for enabled in (True, False):
        cells = []
        for s in splits:
            r = next(r for r in rows if r["map_enabled"] == enabled and r["split"] == s)
            cells.append(f"acc {r['accuracy']:.3f} F1 {r['macro_f1']:.3f}".rjust(20))
        lines.append(("+map     " if enabled else "-map     ") + "  ".join(cells))
    return "\n".join(lines)
