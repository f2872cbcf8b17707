"""Task sampling and the shortest-path expert."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import vocab as V
from .world import FORWARD, InvalidAction, World, required_pitch, step


class Unreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class Task:
    kind: str
    a: int
    b: int = V.NO_OBJECT

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        return cls(d["kind"], d["a"], d["b"])


def subgoals(task: Task, world: World) -> list[tuple[str, int, int]]:
    """Ordered sub-goals ``(kind, object, other_object)`` that solve ``task``."""
    a, b = task.a, task.b

    def place(held: int, recep: int) -> list[tuple[str, int, int]]:
        steps = [("goto", recep, 0)]
        if recep in V.OPENABLE:
            steps.append(("open", recep, 0))
        steps.append(("put", held, recep))
        if recep in V.OPENABLE:
            steps.append(("close", recep, 0))
        return steps

    if task.kind == "pickup":
        return [("goto", a, 0), ("pickup", a, 0)]
    if task.kind == "pick_and_place":
        return [("goto", a, 0), ("pickup", a, 0)] + place(a, b)
    if task.kind == "look_in_light":
        return [("goto", a, 0), ("pickup", a, 0), ("goto", b, 0), ("toggle_on", b, 0)]
    if task.kind == "slice_and_place":
        return [("goto", a, 0), ("slice", a, 0), ("pickup", a, 0)] + place(a, b)
    if task.kind == "toggle_on":
        return [("goto", a, 0), ("toggle_on", a, 0)]
    if task.kind == "toggle_off":
        return [("goto", a, 0), ("toggle_off", a, 0)]
    if task.kind == "open_inspect":
        return [("goto", a, 0), ("open", a, 0), ("close", a, 0)]
    raise ValueError(f"unknown task kind {task.kind!r}")


_SUBGOAL_ACTION = {
    "pickup": V.PICKUP, "put": V.PUT, "open": V.OPEN, "close": V.CLOSE,
    "toggle_on": V.TOGGLE_ON, "toggle_off": V.TOGGLE_OFF, "slice": V.SLICE,
}


def feasible_tasks(world: World) -> list[Task]:
    present = sorted(o.cls for o in world.objects.values())
    is_on = {o.cls: o.on for o in world.objects.values()}
    pick = [c for c in present if c in V.PICKUPABLE]
    recep = [c for c in present if c in V.RECEPTACLE]
    toggle = [c for c in present if c in V.TOGGLEABLE and not is_on[c]]
    lit = [c for c in present if c in V.TOGGLEABLE and is_on[c]]
    sliceable = [c for c in present if c in V.SLICEABLE]
    openable = [c for c in present if c in V.OPENABLE and c in V.RECEPTACLE]
    tasks = [Task("pickup", a) for a in pick]
    tasks += [Task("pick_and_place", a, b) for a in pick for b in recep]
    tasks += [Task("look_in_light", a, b) for a in pick for b in toggle if b not in V.RECEPTACLE]
    tasks += [Task("slice_and_place", a, b) for a in sliceable for b in recep]
    tasks += [Task("toggle_on", a) for a in toggle]
    tasks += [Task("toggle_off", a) for a in lit]
    tasks += [Task("open_inspect", a) for a in openable]
    return tasks


def sample_task(world: World, rng: np.random.Generator) -> Task:
    by_kind: dict[str, list[Task]] = {}
    for t in feasible_tasks(world):
        by_kind.setdefault(t.kind, []).append(t)
    kinds = sorted(by_kind)
    options = by_kind[kinds[int(rng.integers(len(kinds)))]]
    return options[int(rng.integers(len(options)))]


def _locate(world: World, cls: int) -> tuple[int, int]:
    for cell, obj in world.objects.items():
        if obj.cls == cls:
            return cell
    raise Unreachable(f"object {V.OBJECT_NAMES[cls]} not in world")


def navigate(world: World, target: tuple[int, int]) -> list[int]:
    """Shortest MoveAhead/RotateLeft/RotateRight path to face ``target`` from an adjacent cell."""
    start = (world.x, world.y, world.heading)

    def done(state):
        x, y, h = state
        dx, dy = FORWARD[h]
        return (x + dx, y + dy) == target

    if done(start):
        return []
    parent: dict[tuple[int, int, int], tuple[tuple[int, int, int], int] | None] = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        x, y, h = state
        dx, dy = FORWARD[h]
        moves = []
        if world.free(x + dx, y + dy):
            moves.append((V.MOVE_AHEAD, (x + dx, y + dy, h)))
        moves.append((V.ROTATE_LEFT, (x, y, (h - 1) % 4)))
        moves.append((V.ROTATE_RIGHT, (x, y, (h + 1) % 4)))
        for action, nxt in moves:
            if nxt in parent:
                continue
            parent[nxt] = (state, action)
            if done(nxt):
                path = []
                node = nxt
                while parent[node] is not None:
                    node, act = parent[node]
                    path.append(act)
                return path[::-1]
            queue.append(nxt)
    raise Unreachable(f"no path to face cell {target}")


def plan_with_subgoals(world: World, task: Task) -> tuple[list[int], list[tuple[str, int, int]]]:
    """Expert transcript (without stop) and the sub-goals it realises.

    Works on a copy; ``world`` is left untouched.
    """
    sim = world.copy()
    actions: list[int] = []
    goals = subgoals(task, sim)
    for kind, a, _ in goals:
        if kind == "goto":
            path = navigate(sim, _locate(sim, a))
        else:
            target = sim.objects.get(sim.ahead())
            if target is None:
                raise Unreachable(f"sub-goal {kind} has nothing in front")
            path = []
            want = required_pitch(target.cls)
            while sim.pitch < want:
                path.append(V.LOOK_DOWN)
                sim.pitch += 1
            while sim.pitch > want:
                path.append(V.LOOK_UP)
                sim.pitch -= 1
            path.append(_SUBGOAL_ACTION[kind])
            try:
                step(sim, path[-1])
            except InvalidAction as exc:
                raise Unreachable(str(exc)) from exc
            actions.extend(path)
            continue
        for act in path:
            step(sim, act)
        actions.extend(path)
    return actions, goals


def plan_expert(world: World, task: Task) -> list[int]:
    return plan_with_subgoals(world, task)[0]


def task_achieved(world: World, task: Task) -> bool:
    """Goal test on a world state reached by executing a transcript."""
    def find(cls):
        return next((o for o in world.objects.values() if o.cls == cls), None)

    if task.kind == "pickup":
        return world.held == task.a
    if task.kind in ("pick_and_place", "slice_and_place"):
        recep = find(task.b)
        ok = recep is not None and recep.contents == task.a
        if task.b in V.OPENABLE:
            ok = ok and not recep.open
        return ok
    if task.kind == "look_in_light":
        lamp = find(task.b)
        return world.held == task.a and lamp is not None and lamp.on
    if task.kind in ("toggle_on", "toggle_off"):
        obj = find(task.a)
        return obj is not None and obj.on == (task.kind == "toggle_on")
    if task.kind == "open_inspect":
        obj = find(task.a)
        return obj is not None and not obj.open
    raise ValueError(f"unknown task kind {task.kind!r}")
