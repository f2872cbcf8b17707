"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are echoed at the end of the pytest run (see ``conftest.py``) and
also written to ``acceptance_report.txt`` next to the tests.
"""
import csv
import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

from liam import autodiff as ad
from liam.autodiff import Tensor
from liam.contrastive import TAU_INIT, TAU_MAX, TAU_MIN
from liam.gradcheck import run_suite
from liam.harness import cli
from liam.harness.checkpoint import load_checkpoint, save_checkpoint
from liam.harness.config import TrainConfig, load_config
from liam.harness.evaluate import zero_shot_chance
from liam.harness.metrics import accuracy, macro_f1
from liam.harness.train import PairPool, pretrain, train_e2e
from liam.losses import action_loss, goal_progress_targets
from liam.model import build_params, forward_episode
from liam.params import group_of
from liam.worldgen import NUM_ACTIONS, PAD, generate_split, write_dataset

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
REPORT: list[str] = []
TAU_LOG: list[float] = []


def report(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    REPORT.append(line)
    print(line)


def held_out(layouts: int, per_layout: int = 2) -> list:
    return generate_split("unseen", range(1_000_000, 1_000_000 + layouts), per_layout)


@pytest.fixture(scope="module")
def train_set():
    return generate_split("train", range(100), 4)


@pytest.fixture(scope="module")
def held_set():
    return held_out(100)


# ---------------------------------------------------------------------------


def test_c01_gradient_suite():
    t0 = time.perf_counter()
    rows = run_suite(seeds=range(10))
    seconds = time.perf_counter() - t0
    names = {r["check"] for r in rows}
    composites = {"L_image_action", "L_text_image", "L_action", "L_object", "L_gp", "L_total"}
    worst = {dt: max(r["max_rel_error"] for r in rows if r["dtype"] == dt) for dt in ("float32", "float64")}
    ok = (composites <= names and all(r["passed"] for r in rows) and worst["float32"] < 1e-4
          and worst["float64"] < 1e-6 and seconds < 60)
    report(1, ok, f"{len(names)} checks x 10 seeds, max rel err f32 {worst['float32']:.2e} "
                  f"f64 {worst['float64']:.2e}, {seconds:.1f} s")
    assert ok, [r for r in rows if not r["passed"]]


def test_c02_random_init_at_chance():
    held = held_out(300)
    cfg = TrainConfig(eval_pairs=2000)
    res = zero_shot_chance(cfg, PairPool.from_episodes(held), held, seed=0)
    ok = res["pairs"] >= 2000 and abs(res["i2a_z"]) <= 3 and abs(res["t2i_z"]) <= 3 and res["t2i_chance"] == 1 / 3
    report(2, ok, f"I2A {res['i2a_acc']:.4f} vs 1/U {res['i2a_chance']:.4f} (z={res['i2a_z']:+.2f}, "
                  f"{res['pairs']} pairs); T2I {res['t2i_acc']:.4f} vs 1/3 (z={res['t2i_z']:+.2f}, "
                  f"{res['t2i_rows']} rows)")
    assert ok


def test_c03_pretraining_beats_chance(train_set, held_set):
    pairs = sum(ep.n - 1 for ep in train_set)
    cfg = load_config(CONFIGS / "pair.yaml", ["eval_every=100"])
    pair = pretrain(cfg, train_set, {"unseen": held_set})
    pe = [r for r in pair.history if r["split"] == "unseen"][-1]
    pair_ok = pairs >= 2000 and pe["i2a_acc"] >= 5 * pe["i2a_chance"] and pair.seconds <= 300

    cfg = load_config(CONFIGS / "triple.yaml", ["eval_every=500"])
    triple = pretrain(cfg, train_set, {"unseen": held_set[:198]})
    te = [r for r in triple.history if r["split"] == "unseen"][-1]
    triple_ok = (te["i2a_acc"] >= 5 * te["i2a_chance"] and te["t2i_acc"] >= 2 / 3 and triple.seconds <= 300)
    for r in pair.history + triple.history:
        TAU_LOG.extend([r["tau_ia"], r["tau_ti"]])
    report(3, pair_ok and triple_ok,
           f"pair ({pairs} pairs): I2A {pe['i2a_acc']:.3f} vs 5x chance {5 * pe['i2a_chance']:.3f}, "
           f"{pair.seconds:.0f} s; triple: I2A {te['i2a_acc']:.3f} vs {5 * te['i2a_chance']:.3f}, "
           f"T2I {te['t2i_acc']:.3f} vs 0.667, {triple.seconds:.0f} s")
    assert pair_ok and triple_ok


def test_c04_no_leakage():
    episodes = generate_split("train", range(200, 250), 1)
    cfg = TrainConfig()
    params = build_params(cfg.model, 0)
    rng = np.random.default_rng(0)
    checked = 0
    ok = True
    for ep in episodes:
        base = forward_episode(params, cfg.model, ep)[0].data
        for _ in range(10):
            t = int(rng.integers(ep.n))
            acts = ep.actions.copy()
            acts[t:] = rng.integers(0, NUM_ACTIONS, size=ep.n - t)
            frames, maps = ep.frames.copy(), ep.maps.copy()
            frames[t + 1:] = rng.random(frames[t + 1:].shape).astype(np.float32)
            maps[t + 1:] = rng.random(maps[t + 1:].shape).astype(np.float32)
            pert = dataclasses.replace(ep, actions=acts, frames=frames, maps=maps)
            row = forward_episode(params, cfg.model, pert, actions=acts)[0].data[t]
            ok &= row.tobytes() == base[t].tobytes()
            checked += 1
    report(4, ok, f"{len(episodes)} episodes x 10 sites ({checked} perturbations), logits at step t bit-identical")
    assert ok


def test_c05_overfit_eight_episodes():
    eps = generate_split("train", range(8), 1)
    cfg = TrainConfig(stage="e2e", optimizer="adam", lr=0.001, steps=1000, eval_every=25)
    res = train_e2e(cfg, eps, {"train": eps}, stop_when=lambda r: r["accuracy"] >= 0.99)
    last = [r for r in res.history if r["split"] == "train" and "accuracy" in r][-1]
    for r in res.history:
        TAU_LOG.extend([r["tau_ia"], r["tau_ti"]])
    ok = last["accuracy"] >= 0.99 and res.seconds <= 300
    report(5, ok, f"teacher-forced accuracy {last['accuracy']:.4f} at step {last['step']} of {cfg.steps}, "
                  f"{res.seconds:.1f} s")
    assert ok


def test_c06_map_ablation_grid(tmp_path, capsys):
    write_dataset(generate_split("train", range(12), 2), tmp_path / "train.jsonl")
    write_dataset(generate_split("seen", range(12), 1), tmp_path / "seen.jsonl")
    write_dataset(held_out(12, 1), tmp_path / "unseen.jsonl")
    code = cli.main(["map-ablation", "--config", str(CONFIGS / "e2e.yaml"), "--train", str(tmp_path / "train.jsonl"),
                     "--eval", str(tmp_path / "seen.jsonl"), str(tmp_path / "unseen.jsonl"),
                     "--out", str(tmp_path / "abl"), "--set", "steps=40"])
    grid = capsys.readouterr().out
    rows = list(csv.DictReader(open(tmp_path / "abl" / "ablation.csv")))
    cells = {(r["map_enabled"], r["split"]) for r in rows if r["accuracy"] and r["macro_f1"]}
    ok = code == 0 and cells == {(m, s) for m in ("True", "False") for s in ("seen", "unseen")}
    report(6, ok, "2x2 grid {+map,-map} x {seen,unseen} populated:\n" + grid.rstrip())
    assert ok


def test_c07_loss_identities():
    rng = np.random.default_rng(0)
    logits = Tensor(rng.normal(size=(50, NUM_ACTIONS)))
    onehot = np.eye(NUM_ACTIONS)[rng.integers(0, NUM_ACTIONS, size=50)]
    kl_ce = float(np.max(np.abs(ad.kl_div(logits, onehot).data - ad.cross_entropy(logits, onehot).data)))
    uniform = action_loss(Tensor(np.zeros((20, NUM_ACTIONS))), rng.integers(0, NUM_ACTIONS - 1, size=20)).item()
    gp = goal_progress_targets(4)
    ok = kl_ce < 1e-9 and abs(uniform - math.log(14)) < 1e-6 and gp.tolist() == [0.25, 0.5, 0.75, 1.0]
    report(7, ok, f"|KL-CE| {kl_ce:.1e}; uniform loss - ln 14 = {uniform - math.log(14):.1e}; gp(4) {gp.tolist()}")
    assert ok


def _brute_force(pred, target):
    pairs = [(p, t) for p, t in zip(pred, target) if t != PAD]
    acc = sum(p == t for p, t in pairs) / len(pairs)
    classes = sorted({t for _, t in pairs} | {p for p, _ in pairs if p != PAD})
    f1s = []
    for c in classes:
        tp = sum(1 for p, t in pairs if p == c and t == c)
        fp = sum(1 for p, t in pairs if p == c and t != c)
        fn = sum(1 for p, t in pairs if p != c and t == c)
        f1s.append(2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0)
    return acc, sum(f1s) / len(f1s)


def test_c08_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        target = rng.integers(0, NUM_ACTIONS, size=n)
        target[0] = rng.integers(0, 13)
        pred = np.where(rng.random(n) < 0.5, target, rng.integers(0, NUM_ACTIONS, size=n))
        acc, f1 = _brute_force(pred.tolist(), target.tolist())
        mismatches += (accuracy(pred, target) != acc) + (not math.isclose(macro_f1(pred, target), f1,
                                                                          rel_tol=0, abs_tol=1e-15))
    ok = mismatches == 0
    report(8, ok, f"1000 random prediction/target pairs, {mismatches} mismatches")
    assert ok


def test_c09_reproducibility(tmp_path):
    eps = generate_split("train", range(6), 1)
    cfg = TrainConfig(stage="e2e", optimizer="adam", lr=0.001, steps=8, eval_every=4, e2e_batch_size=4)
    train_e2e(cfg, eps, {"train": eps}, out_dir=tmp_path / "a")
    train_e2e(cfg, eps, {"train": eps}, out_dir=tmp_path / "b")
    csv_same = (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    ckpt = load_checkpoint(tmp_path / "a" / "checkpoint.bin")
    save_checkpoint(ckpt, tmp_path / "again.bin")
    again = load_checkpoint(tmp_path / "again.bin")
    round_trip = (ckpt.tensors.keys() == again.tensors.keys()
                  and all(ckpt.tensors[k].tobytes() == again.tensors[k].tobytes() for k in ckpt.tensors)
                  and (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "again.bin").read_bytes())

    frozen_cfg = load_config(CONFIGS / "e2e_frozen_encoders.yaml", ["steps=5", "e2e_batch_size=4"])
    init = build_params(frozen_cfg.model, frozen_cfg.seed).arrays()
    res = train_e2e(frozen_cfg, eps)
    frozen = [k for k in init if group_of(k) in frozen_cfg.freeze]
    frozen_same = all(res.params[k].data.tobytes() == init[k].tobytes() for k in frozen)
    moved = any(res.params[k].data.tobytes() != init[k].tobytes() for k in init if group_of(k) == "fusion")
    ok = csv_same and round_trip and frozen_same and moved
    report(9, ok, f"metrics CSV identical: {csv_same}; checkpoint round-trip bit-exact: {round_trip}; "
                  f"{len(frozen)} frozen tensors unchanged: {frozen_same}")
    assert ok


def test_c10_temperature_bounds():
    params = build_params(TrainConfig().model, 0)
    init_ok = TAU_INIT == 0.07 and all(params[k].data[0] == np.float32(0.07)
                                       for k in ("temperature.ia", "temperature.ti"))
    # a deliberately aggressive run pushes both temperatures into the clamp
    eps = generate_split("train", range(10), 2)
    cfg = TrainConfig(stage="triple", optimizer="sgd", lr=50.0, steps=10, eval_every=5)
    res = pretrain(cfg, eps, {"train": eps[:6]})
    logged = TAU_LOG + [v for r in res.history for v in (r["tau_ia"], r["tau_ti"])]
    in_bounds = all(TAU_MIN <= v <= TAU_MAX for v in logged)
    ok = init_ok and in_bounds and len(logged) > 0
    report(10, ok, f"init {TAU_INIT}; {len(logged)} logged values in [{min(logged):.4g}, {max(logged):.4g}]")
    assert ok
