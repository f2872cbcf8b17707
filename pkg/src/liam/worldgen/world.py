"""Gridworld state, simulator and sensors.

Coordinates are ``(x, y)`` with ``y`` growing southwards. Headings are
0=N, 1=E, 2=S, 3=W. Every non-empty cell holds exactly one object; objects
block movement.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import vocab as V

HEADINGS = "NESW"
FORWARD = ((0, -1), (1, 0), (0, 1), (-1, 0))
PITCH_LEVELS = 3  # 0 = up, 1 = level, 2 = down
LEVEL, DOWN = 1, 2
STATE_FLAGS = ("open", "on", "sliced", "filled")


@dataclass(frozen=True)
class WorldConfig:
    width: int = 8
    height: int = 8
    view: int = 3
    num_objects: int = 10
    min_pickupable: int = 3
    min_receptacle: int = 2
    min_toggleable: int = 1
    max_len: int = 24

    def __post_init__(self):
        if self.view < 1 or self.view % 2 == 0:
            raise ValueError(f"view window must be a positive odd size, got {self.view}")
        if self.width < 3 or self.height < 3:
            raise ValueError("world must be at least 3x3")
        if self.num_objects >= self.width * self.height:
            raise ValueError("too many objects for the grid")

    @property
    def cell_features(self) -> int:
        return V.NUM_OBJECTS + 1 + len(STATE_FLAGS)

    @property
    def frame_feature_len(self) -> int:
        return self.view * self.view * self.cell_features + PITCH_LEVELS + V.NUM_OBJECTS

    @property
    def map_channels(self) -> int:
        return V.NUM_OBJECTS

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (self.map_channels, self.width, self.height)


@dataclass
class Obj:
    cls: int
    open: bool = False
    on: bool = False
    sliced: bool = False
    contents: int = V.NO_OBJECT

    def flags(self) -> tuple[int, int, int, int]:
        return (int(self.open), int(self.on), int(self.sliced), int(self.contents != V.NO_OBJECT))


@dataclass
class World:
    width: int
    height: int
    objects: dict[tuple[int, int], Obj]
    x: int
    y: int
    heading: int
    pitch: int = LEVEL
    held: int = V.NO_OBJECT
    held_sliced: bool = False
    seed: int = 0

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and (x, y) not in self.objects

    def ahead(self) -> tuple[int, int]:
        dx, dy = FORWARD[self.heading]
        return self.x + dx, self.y + dy

    def copy(self) -> "World":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "agent": [self.x, self.y, self.heading, self.pitch, self.held, int(self.held_sliced)],
            "objects": [
                [x, y, o.cls, int(o.open), int(o.on), int(o.sliced), o.contents]
                for (x, y), o in sorted(self.objects.items())
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        x, y, heading, pitch, held, held_sliced = d["agent"]
        objects = {
            (ox, oy): Obj(c, bool(op), bool(on), bool(sl), ct)
            for ox, oy, c, op, on, sl, ct in d["objects"]
        }
        return cls(d["width"], d["height"], objects, x, y, heading, pitch, held, bool(held_sliced), d["seed"])


def _place_classes(rng: np.random.Generator, config: WorldConfig) -> list[int]:
    def pick(pool, k):
        return [int(c) for c in rng.choice(sorted(pool), size=k, replace=False)]

    chosen = pick(V.PICKUPABLE, config.min_pickupable)
    chosen += pick(V.RECEPTACLE, config.min_receptacle)
    chosen += pick(V.TOGGLEABLE - set(chosen), config.min_toggleable)
    rest = sorted(set(range(1, V.NUM_OBJECTS)) - set(chosen))
    extra = config.num_objects - len(chosen)
    if extra < 0:
        raise ValueError("num_objects smaller than the required affordance minimums")
    chosen += [int(c) for c in rng.choice(rest, size=extra, replace=False)]
    return chosen


def generate_world(seed: int, config: WorldConfig = WorldConfig()) -> World:
    """Deterministic room layout plus an agent pose, both drawn from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    classes = _place_classes(rng, config)
    cells = config.width * config.height
    order = rng.permutation(cells)
    objects = {}
    switched_on = rng.random(len(classes)) < 0.5
    for cls, flat, on in zip(classes, order[: len(classes)], switched_on):
        objects[(int(flat % config.width), int(flat // config.width))] = Obj(cls, on=bool(on and cls in V.TOGGLEABLE))
    free_cells = order[len(classes):]
    start = int(free_cells[0])
    return World(
        config.width, config.height, objects,
        x=start % config.width, y=start // config.width,
        heading=int(rng.integers(4)), seed=seed,
    )


class InvalidAction(RuntimeError):
    pass


def step(world: World, action: int) -> World:
    """Apply one action in place and return the world.

    Motor actions that hit an obstacle or an impossible pitch raise
    :class:`InvalidAction`, as do interactions whose preconditions fail.
    """
    if action == V.MOVE_AHEAD:
        nx, ny = world.ahead()
        if not world.free(nx, ny):
            raise InvalidAction("MoveAhead blocked")
        world.x, world.y = nx, ny
    elif action == V.ROTATE_LEFT:
        world.heading = (world.heading - 1) % 4
    elif action == V.ROTATE_RIGHT:
        world.heading = (world.heading + 1) % 4
    elif action == V.LOOK_UP:
        if world.pitch == 0:
            raise InvalidAction("already looking up")
        world.pitch -= 1
    elif action == V.LOOK_DOWN:
        if world.pitch == PITCH_LEVELS - 1:
            raise InvalidAction("already looking down")
        world.pitch += 1
    elif action in V.INTERACTIONS:
        _interact(world, action)
    elif action == V.STOP:
        pass
    else:
        raise InvalidAction(f"action id {action} cannot be executed")
    return world


def required_pitch(cls: int) -> int:
    return DOWN if cls in V.PICKUPABLE else LEVEL


def _interact(world: World, action: int) -> None:
    cell = world.ahead()
    obj = world.objects.get(cell)
    if obj is None:
        raise InvalidAction("no object ahead")
    if world.pitch != required_pitch(obj.cls):
        raise InvalidAction("object not in view at this pitch")
    if action == V.PICKUP:
        if obj.cls not in V.PICKUPABLE or world.held != V.NO_OBJECT:
            raise InvalidAction("cannot pick up")
        world.held, world.held_sliced = obj.cls, obj.sliced
        del world.objects[cell]
    elif action == V.PUT:
        if obj.cls not in V.RECEPTACLE or world.held == V.NO_OBJECT or obj.contents != V.NO_OBJECT:
            raise InvalidAction("cannot put")
        if obj.cls in V.OPENABLE and not obj.open:
            raise InvalidAction("receptacle closed")
        obj.contents = world.held
        world.held, world.held_sliced = V.NO_OBJECT, False
    elif action in (V.OPEN, V.CLOSE):
        if obj.cls not in V.OPENABLE or obj.open == (action == V.OPEN):
            raise InvalidAction("cannot open/close")
        obj.open = action == V.OPEN
    elif action in (V.TOGGLE_ON, V.TOGGLE_OFF):
        if obj.cls not in V.TOGGLEABLE or obj.on == (action == V.TOGGLE_ON):
            raise InvalidAction("cannot toggle")
        obj.on = action == V.TOGGLE_ON
    elif action == V.SLICE:
        if obj.cls not in V.SLICEABLE or obj.sliced:
            raise InvalidAction("cannot slice")
        obj.sliced = True


def visible_cells(world: World, view: int) -> list[tuple[int, int]]:
    """The ``view x view`` window ahead of the agent, nearest row first, left to right."""
    fx, fy = FORWARD[world.heading]
    rx, ry = FORWARD[(world.heading + 1) % 4]
    half = view // 2
    return [
        (world.x + dist * fx + lat * rx, world.y + dist * fy + lat * ry)
        for dist in range(1, view + 1)
        for lat in range(-half, half + 1)
    ]


def render_frame(world: World, view: int) -> np.ndarray:
    """Ego-centric observation vector.

    Per window cell: object-class one-hot (index 0 = empty floor), a wall flag
    for out-of-bounds cells, and the four state flags. Then the pitch one-hot
    and the held-object one-hot.
    """
    per_cell = V.NUM_OBJECTS + 1 + len(STATE_FLAGS)
    obs = np.zeros(view * view * per_cell + PITCH_LEVELS + V.NUM_OBJECTS, dtype=np.float32)
    for k, (cx, cy) in enumerate(visible_cells(world, view)):
        base = k * per_cell
        if not world.in_bounds(cx, cy):
            obs[base + V.NUM_OBJECTS] = 1.0
            continue
        obj = world.objects.get((cx, cy))
        if obj is None:
            obs[base] = 1.0
            continue
        obs[base + obj.cls] = 1.0
        obs[base + V.NUM_OBJECTS + 1: base + per_cell] = obj.flags()
    tail = view * view * per_cell
    obs[tail + world.pitch] = 1.0
    obs[tail + PITCH_LEVELS + world.held] = 1.0
    return obs


def empty_map(world: World) -> np.ndarray:
    return np.zeros((V.NUM_OBJECTS, world.width, world.height), dtype=np.float32)


def accumulate_map(prev_map: np.ndarray | None, world: World, view: int) -> np.ndarray:
    """Add the currently visible cells to a top-down semantic map.

    Channel 0 marks explored cells; channel ``c`` marks cells where object
    class ``c`` has been seen. Entries only ever switch on.
    """
    grid = empty_map(world) if prev_map is None else prev_map.copy()
    for cx, cy in visible_cells(world, view):
        if not world.in_bounds(cx, cy):
            continue
        grid[0, cx, cy] = 1.0
        obj = world.objects.get((cx, cy))
        if obj is not None:
            grid[obj.cls, cx, cy] = 1.0
    return grid


def layout_map(world: World) -> np.ndarray:
    """Ground-truth object layout in map format (class channels only)."""
    grid = empty_map(world)
    for (x, y), obj in world.objects.items():
        grid[obj.cls, x, y] = 1.0
    return grid
