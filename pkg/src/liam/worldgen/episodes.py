"""Episodes: instruction + expert transcript + per-step sensors, and their file format.

A dataset file holds one JSON record per line. Frames and maps are binary,
so each is stored as the list of its non-zero flat indices.
"""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import vocab as V
from .planner import Task, Unreachable, plan_with_subgoals, sample_task
from .world import World, WorldConfig, accumulate_map, generate_world, render_frame, step

SCHEMA_VERSION = 1
SPLIT_CODES = {"train": 0, "seen": 1, "unseen": 2}


class DatasetFormatError(ValueError):
    pass


@dataclass
class Episode:
    episode_id: str
    split: str
    layout_seed: int
    seed: int
    task: Task
    world: World  # initial state
    tokens: np.ndarray  # (m,) int64
    goal_len: int  # tokens up to and including the goal marker
    actions: np.ndarray  # (n,) int64, last = stop
    objects: np.ndarray  # (n,) int64
    frames: np.ndarray  # (n, frame_feature_len) float32
    maps: np.ndarray  # (n, channels, width, height) float32
    view: int = 3

    @property
    def n(self) -> int:
        return len(self.actions)

    @property
    def m(self) -> int:
        return len(self.tokens)

    @property
    def instruction(self) -> str:
        return V.detokenize(self.tokens)

    def to_record(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "episode_id": self.episode_id,
            "split": self.split,
            "layout_seed": self.layout_seed,
            "seed": self.seed,
            "view": self.view,
            "task": self.task.to_dict(),
            "world": self.world.to_dict(),
            "instruction": self.instruction,
            "goal_len": self.goal_len,
            "actions": [int(a) for a in self.actions],
            "objects": [int(o) for o in self.objects],
            "frame_len": int(self.frames.shape[1]),
            "map_shape": [int(s) for s in self.maps.shape[1:]],
            "frames": [np.flatnonzero(f).tolist() for f in self.frames],
            "maps": [np.flatnonzero(g).tolist() for g in self.maps],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Episode":
        if rec.get("schema") != SCHEMA_VERSION:
            raise DatasetFormatError(f"unsupported schema version {rec.get('schema')!r}")
        n = len(rec["actions"])
        frames = np.zeros((n, rec["frame_len"]), dtype=np.float32)
        for i, idx in enumerate(rec["frames"]):
            frames[i, idx] = 1.0
        map_shape = tuple(rec["map_shape"])
        maps = np.zeros((n, int(np.prod(map_shape))), dtype=np.float32)
        for i, idx in enumerate(rec["maps"]):
            maps[i, idx] = 1.0
        return cls(
            episode_id=rec["episode_id"],
            split=rec["split"],
            layout_seed=rec["layout_seed"],
            seed=rec["seed"],
            task=Task.from_dict(rec["task"]),
            world=World.from_dict(rec["world"]),
            tokens=np.asarray(V.tokenize(rec["instruction"]), dtype=np.int64),
            goal_len=rec["goal_len"],
            actions=np.asarray(rec["actions"], dtype=np.int64),
            objects=np.asarray(rec["objects"], dtype=np.int64),
            frames=frames,
            maps=maps.reshape((n,) + map_shape),
            view=rec["view"],
        )

    def equals(self, other: "Episode") -> bool:
        return (
            self.to_record() == other.to_record()
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.maps, other.maps)
        )


def _fill(template: str, a: int, b: int) -> str:
    return template.format(a=V.object_token(a), b=V.object_token(b) if b else "")


def instruction_tokens(task: Task, goals, rng: np.random.Generator) -> tuple[list[int], int]:
    """Goal sentence, goal marker, then one templated sentence per sub-goal."""
    def choose(options):
        return options[int(rng.integers(len(options)))]

    words = _fill(choose(V.GOAL_TEMPLATES[task.kind]), task.a, task.b).split()
    words.append(V.GOAL_TOKEN)
    goal_len = len(words)
    for kind, a, b in goals:
        words += _fill(choose(V.SUBGOAL_TEMPLATES[kind]), a, b).split()
        words.append(V.SEP_TOKEN)
    return [V.TOKEN_ID[w] for w in words], goal_len


def replay(world: World, actions: Iterable[int], view: int):
    """Execute ``actions`` from ``world``; return frames, maps and object labels.

    One frame/map is recorded before every action, so ``len(actions)`` of each.
    """
    sim = world.copy()
    frames, maps, labels = [], [], []
    grid = None
    for a in actions:
        frames.append(render_frame(sim, view))
        grid = accumulate_map(grid, sim, view)
        maps.append(grid)
        target = sim.objects.get(sim.ahead())
        labels.append(target.cls if a in V.INTERACTIONS and target is not None else V.NO_OBJECT)
        step(sim, a)
    return np.stack(frames), np.stack(maps), np.asarray(labels, dtype=np.int64), sim


def emit_episode(world: World, task: Task, seed: int, *, split: str = "train",
                 episode_id: str | None = None, view: int = 3) -> Episode:
    """Plan the expert transcript for ``task`` and record the episode.

    Raises :class:`Unreachable` when the planner fails.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A57]))
    transcript, goals = plan_with_subgoals(world, task)
    actions = transcript + [V.STOP]
    frames, maps, labels, _ = replay(world, actions, view)
    tokens, goal_len = instruction_tokens(task, goals, rng)
    return Episode(
        episode_id=episode_id or f"{split}-{world.seed}-{seed}",
        split=split,
        layout_seed=world.seed,
        seed=seed,
        task=task,
        world=world.copy(),
        tokens=np.asarray(tokens, dtype=np.int64),
        goal_len=goal_len,
        actions=np.asarray(actions, dtype=np.int64),
        objects=labels,
        frames=frames,
        maps=maps,
        view=view,
    )


def _split_code(split: str) -> int:
    return SPLIT_CODES.get(split, zlib.crc32(split.encode()))


def sample_episode(layout_seed: int, index: int, split: str, config: WorldConfig = WorldConfig(),
                   max_tries: int = 64) -> Episode:
    """One episode in room ``layout_seed``: fresh start pose and task, resampled until valid."""
    base = generate_world(layout_seed, config)
    for attempt in range(max_tries):
        seed = int(np.random.SeedSequence([layout_seed, _split_code(split), index, attempt]).generate_state(1)[0])
        rng = np.random.default_rng(seed)
        world = base.copy()
        free = [(x, y) for x in range(world.width) for y in range(world.height) if world.free(x, y)]
        world.x, world.y = free[int(rng.integers(len(free)))]
        world.heading = int(rng.integers(4))
        task = sample_task(world, rng)
        try:
            ep = emit_episode(world, task, seed, split=split, view=config.view,
                              episode_id=f"{split}-{layout_seed}-{index}")
        except Unreachable:
            continue
        if ep.n <= config.max_len:
            return ep
    raise Unreachable(f"no valid episode for layout {layout_seed} after {max_tries} tries")


def generate_split(split: str, layout_seeds: Iterable[int], episodes_per_layout: int,
                   config: WorldConfig = WorldConfig()) -> list[Episode]:
    return [
        sample_episode(layout, k, split, config)
        for layout in layout_seeds
        for k in range(episodes_per_layout)
    ]


def write_dataset(episodes: Iterable[Episode], path: str | os.PathLike) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_record(), separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def iter_dataset(path: str | os.PathLike) -> Iterator[Episode]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                yield Episode.from_record(rec)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: malformed episode record ({exc})") from exc


def read_dataset(path: str | os.PathLike) -> list[Episode]:
    return list(iter_dataset(path))
