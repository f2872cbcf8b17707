"""Command-line entry point: ``liam <command> [options]``.

Every command writes ``metrics.csv`` and ``config.yaml`` into its ``--out``
directory. Failures print one line to stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from ..fusion import MODALITY_NAMES, build_causal_mask, format_mask, token_layout
from ..model import build_params
from ..worldgen.episodes import DatasetFormatError, generate_split, read_dataset, write_dataset
from ..worldgen.world import WorldConfig
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, TrainConfig, dump_config, from_dict, load_config
from .evaluate import evaluate_matching, evaluate_sequences, format_grid, map_ablation, zero_shot_chance
from .metrics import MetricsWriter
from .train import METRIC_COLUMNS, PairPool, pretrain, train_e2e

log = logging.getLogger("liam")

UNSEEN_LAYOUT_OFFSET = 1_000_000


def _write_dump(out: Path, values: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(values, fh, sort_keys=True)


def _split_name(path) -> str:
    return Path(path).stem


def _resolve_config(args, stage: str | None = None) -> TrainConfig:
    overrides = list(args.set or [])
    if stage is not None:
        overrides.append(f"stage={stage}")
    cfg = load_config(args.config, overrides)
    if getattr(args, "train", None):
        cfg = cfg.replace(train_data=args.train)
    if getattr(args, "eval", None):
        cfg = cfg.replace(eval_data=list(args.eval))
    if getattr(args, "out", None):
        cfg = cfg.replace(out_dir=args.out)
    return cfg


def _load_eval_sets(cfg: TrainConfig, paths) -> dict:
    return {_split_name(p): read_dataset(cfg.resolve_path(p)) for p in paths}


# ---------------------------------------------------------------------------
# Commands


def _layout_range(text: str) -> range:
    """``A:B`` (half-open) or a single seed."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
        else:
            lo = int(text)
            hi = lo + 1
    except ValueError:
        raise argparse.ArgumentTypeError(f"layout range must look like A:B, got {text!r}") from None
    if hi <= lo:
        raise argparse.ArgumentTypeError(f"empty layout range {text!r}")
    return range(lo, hi)


def cmd_gen(args) -> int:
    out = Path(args.out)
    world = WorldConfig()
    if args.split or args.layouts or args.output:
        # one split into one file
        if not (args.split and args.layouts and args.output):
            raise ValueError("--split, --layouts and --output go together")
        splits = {args.split: (args.layouts, args.episodes_per_layout)}
        files = {args.split: Path(args.output)}
    else:
        train_layouts = range(args.seed, args.seed + args.train_layouts)
        unseen_start = UNSEEN_LAYOUT_OFFSET + args.seed
        splits = {
            "train": (train_layouts, args.episodes_per_layout),
            "seen": (range(args.seed, args.seed + args.seen_layouts), args.eval_episodes_per_layout),
            "unseen": (range(unseen_start, unseen_start + args.unseen_layouts), args.eval_episodes_per_layout),
        }
        files = {split: out / f"{split}.jsonl" for split in splits}
    writer = MetricsWriter(out / "metrics.csv", ("split", "episodes", "pairs", "mean_steps", "layouts"))
    for split, (layouts, per_layout) in splits.items():
        episodes = generate_split(split, layouts, per_layout, world)
        write_dataset(episodes, files[split])
        steps = np.array([ep.n for ep in episodes])
        writer.write({"split": split, "episodes": len(episodes), "pairs": int(np.sum(steps - 1)),
                      "mean_steps": float(steps.mean()), "layouts": len(layouts)})
        print(f"{split}: {len(episodes)} episodes -> {files[split]}")
    _write_dump(out, {k: (f"{v.start}:{v.stop}" if isinstance(v, range) else v)
                     for k, v in vars(args).items() if k != "func"})
    return 0


def _train_command(args, stage: str) -> int:
    cfg = _resolve_config(args, stage)
    train = read_dataset(cfg.resolve_path(cfg.train_data))
    evals = _load_eval_sets(cfg, cfg.eval_data)
    runner = train_e2e if stage == "e2e" else pretrain
    result = runner(cfg, train, evals, init=args.init, resume=args.resume, out_dir=cfg.out_dir)
    last = {r["split"]: r for r in result.history if r["split"] != "train"}
    for split, row in last.items():
        shown = {k: round(v, 4) for k, v in row.items() if isinstance(v, float)}
        print(f"step {row['step']} {split}: {shown}")
    print(f"checkpoint -> {Path(cfg.out_dir) / 'checkpoint.bin'} ({result.seconds:.1f} s)")
    return 0


def cmd_pretrain(args) -> int:
    return _train_command(args, args.stage)


def cmd_train(args) -> int:
    return _train_command(args, "e2e")


def _model_from_args(args):
    """Config and parameters from ``--checkpoint``, or a fresh initialisation."""
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        cfg = from_dict(ckpt.config, args.set or [])
        ckpt.check_model(cfg.model_hash())
        params = build_params(cfg.model, cfg.seed)
        params.load_arrays(ckpt.tensors)
        return cfg, params, ckpt.step
    cfg = load_config(args.config, args.set or [])
    return cfg, build_params(cfg.model, cfg.seed), 0


def _eval_command(args, mode: str) -> int:
    cfg, params, step = _model_from_args(args)
    paths = args.data or cfg.eval_data
    if not paths:
        raise ValueError("no evaluation data given")
    sets = _load_eval_sets(cfg, paths)
    out = Path(args.out)
    writer = MetricsWriter(out / "metrics.csv", METRIC_COLUMNS + ("mode",))
    for split, episodes in sets.items():
        if not episodes:
            raise ValueError(f"evaluation split {split!r} is empty")
        row = {"step": step, "split": split, "mode": mode,
               "tau_ia": float(params["temperature.ia"].data[0]), "tau_ti": float(params["temperature.ti"].data[0])}
        if cfg.stage == "e2e" or mode == "rollout":
            res = evaluate_sequences(params, cfg, episodes, mode=mode)
            row.update(accuracy=res["accuracy"], macro_f1=res["macro_f1"])
            print(f"{split} [{mode}]: accuracy {res['accuracy']:.4f}  macro-F1 {res['macro_f1']:.4f}  "
                  f"({res['positions']} positions)")
        else:
            res = evaluate_matching(params, PairPool.from_episodes(episodes), episodes, cfg,
                                    text=len(episodes) >= cfg.triple_batch_size)
            row.update({k: v for k, v in res.items() if k in METRIC_COLUMNS})
            text = f"  T2I {res['t2i_acc']:.4f}" if "t2i_acc" in res else ""
            print(f"{split}: I2A {res['i2a_acc']:.4f} (chance {res['i2a_chance']:.4f}){text}")
        writer.write(row)
    dump_config(cfg, out / "config.yaml")
    return 0


def cmd_eval(args) -> int:
    return _eval_command(args, args.mode)


def cmd_rollout(args) -> int:
    return _eval_command(args, "rollout")


def cmd_zero_shot(args) -> int:
    cfg = load_config(args.config, args.set or [])
    paths = args.data or cfg.eval_data
    out = Path(args.out)
    cols = ("split", "pairs", "i2a_acc", "i2a_chance", "i2a_sigma", "i2a_z", "i2a_acc_single_init",
            "t2i_rows", "t2i_acc", "t2i_chance", "t2i_sigma", "t2i_z")
    writer = MetricsWriter(out / "metrics.csv", cols)
    for split, episodes in _load_eval_sets(cfg, paths).items():
        res = zero_shot_chance(cfg, PairPool.from_episodes(episodes), episodes, seed=cfg.seed)
        writer.write({"split": split, **res})
        line = f"{split}: I2A {res['i2a_acc']:.4f} vs chance {res['i2a_chance']:.4f} (z={res['i2a_z']:+.2f})"
        if "t2i_acc" in res:
            line += f"; T2I {res['t2i_acc']:.4f} vs {res['t2i_chance']:.4f} (z={res['t2i_z']:+.2f})"
        print(line)
    dump_config(cfg, out / "config.yaml")
    return 0


def cmd_inspect_mask(args) -> int:
    with_map = not args.no_map
    mask = build_causal_mask(args.m, args.n, with_map=with_map)
    print(format_mask(mask, args.m, args.n, with_map=with_map))
    mods, _ = token_layout(args.m, args.n, with_map)
    out = Path(args.out)
    writer = MetricsWriter(out / "metrics.csv", ("query", "key", "allowed", "total"))
    present = sorted(set(mods.tolist()))
    for q in present:
        for k in present:
            block = mask[np.ix_(mods == q, mods == k)]
            writer.write({"query": MODALITY_NAMES[q], "key": MODALITY_NAMES[k],
                          "allowed": int(block.sum()), "total": int(block.size)})
    _write_dump(out, {"m": args.m, "n": args.n, "with_map": with_map})
    return 0


def cmd_grad_check(args) -> int:
    from ..gradcheck import run_suite

    dtypes = {"float32": (np.float32,), "float64": (np.float64,), "both": (np.float32, np.float64)}[args.dtype]
    rows = run_suite(seeds=range(args.seeds), dtypes=dtypes)
    out = Path(args.out)
    MetricsWriter(out / "metrics.csv", ("check", "dtype", "max_rel_error", "tolerance", "passed")).write_all(
        [{**r, "passed": bool(r["passed"])} for r in rows])
    for r in rows:
        if args.verbose or not r["passed"]:
            print(f"{r['check']:<20} {r['dtype']:<8} {r['max_rel_error']:.3e}  {'ok' if r['passed'] else 'FAIL'}")
    for dtype in dtypes:
        name = np.dtype(dtype).name
        worst = max(r["max_rel_error"] for r in rows if r["dtype"] == name)
        print(f"max relative error ({name}): {worst:.3e}")
    _write_dump(out, {"seeds": args.seeds, "dtype": args.dtype})
    failed = [r for r in rows if not r["passed"]]
    if failed:
        print(f"liam: error: {len(failed)} gradient checks failed", file=sys.stderr)
        return 1
    return 0


def cmd_map_ablation(args) -> int:
    cfg = _resolve_config(args, "e2e")
    train = read_dataset(cfg.resolve_path(cfg.train_data))
    splits = _load_eval_sets(cfg, cfg.eval_data)
    out = Path(cfg.out_dir)
    rows = map_ablation(cfg, train, splits, out_dir=out, init=args.init)
    MetricsWriter(out / "metrics.csv", ("map_enabled", "split", "accuracy", "macro_f1", "positions")).write_all(rows)
    dump_config(cfg, out / "config.yaml")
    print(format_grid(rows))
    return 0


# ---------------------------------------------------------------------------
# Parser


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate train/seen/unseen episode files")
    p.add_argument("--out", default="data")
    p.add_argument("--seed", type=int, default=0, help="first layout seed")
    p.add_argument("--train-layouts", type=int, default=100)
    p.add_argument("--episodes-per-layout", type=int, default=4)
    p.add_argument("--seen-layouts", type=int, default=50)
    p.add_argument("--unseen-layouts", type=int, default=50)
    p.add_argument("--eval-episodes-per-layout", type=int, default=2)
    p.add_argument("--split", help="generate only this split (needs --layouts and --output)")
    p.add_argument("--layouts", type=_layout_range, metavar="A:B", help="layout seed range for --split")
    p.add_argument("--output", help="episode file for --split")
    p.set_defaults(func=cmd_gen)

    for name, func, help_text in (("pretrain", cmd_pretrain, "contrastive pretraining (pair or triple stage)"),
                                  ("train", cmd_train, "end-to-end teacher-forced training"),
                                  ("map-ablation", cmd_map_ablation, "train and score with and without maps")):
        p = sub.add_parser(name, help=help_text)
        _config_flags(p)
        if name == "pretrain":
            p.add_argument("--stage", choices=("pair", "triple"), default="pair")
        p.add_argument("--train", help="training episodes (default: config train_data)")
        p.add_argument("--eval", nargs="+", help="held-out episode files (default: config eval_data)")
        p.add_argument("--init", help="initialise parameters from this checkpoint")
        if name != "map-ablation":
            p.add_argument("--resume", help="continue a run from this checkpoint")
        p.add_argument("--out", help="output directory (default: config out_dir)")
        p.set_defaults(func=func, resume=None)

    for name, func in (("eval", cmd_eval), ("rollout", cmd_rollout)):
        p = sub.add_parser(name, help=f"{'score' if name == 'eval' else 'autoregressively decode'} held-out episodes")
        _config_flags(p)
        p.add_argument("--checkpoint", help="trained checkpoint (default: fresh initialisation)")
        p.add_argument("--data", nargs="+", help="episode files (default: config eval_data)")
        if name == "eval":
            p.add_argument("--mode", choices=("teacher-forced", "rollout"), default="teacher-forced")
        p.add_argument("--out", default=f"runs/{name}")
        p.set_defaults(func=func)

    p = sub.add_parser("zero-shot", help="matching accuracy of untrained encoders against chance")
    _config_flags(p)
    p.add_argument("--data", nargs="+")
    p.add_argument("--out", default="runs/zero-shot")
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("inspect-mask", help="print the fusion attention mask")
    p.add_argument("--m", type=int, default=3, help="instruction length")
    p.add_argument("--n", type=int, default=3, help="time steps")
    p.add_argument("--no-map", action="store_true", help="drop the map tokens")
    p.add_argument("--out", default="runs/inspect-mask")
    p.set_defaults(func=cmd_inspect_mask)

    p = sub.add_parser("grad-check", help="finite-difference check of every op and loss")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--dtype", choices=("float32", "float64", "both"), default="both")
    p.add_argument("--out", default="runs/grad-check")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, DatasetFormatError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"liam: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
