import json

import numpy as np
import pytest

from liam.worldgen import (
    NUM_OBJECTS, PAD, STOP, VOCAB_SIZE, DatasetFormatError, InvalidAction, Task, Unreachable, World,
    WorldConfig, accumulate_map, emit_episode, generate_split, generate_world, layout_map, plan_expert,
    read_dataset, render_frame, replay, sample_episode, sample_task, step, task_achieved, write_dataset,
)
from liam.worldgen import vocab as V
from liam.worldgen.world import DOWN, LEVEL, Obj, visible_cells

APPLE = min(V.PICKUPABLE)


def bare_world(objects=None, x=2, y=2, heading=0, pitch=LEVEL, size=5):
    return World(size, size, dict(objects or {}), x, y, heading, pitch)


# --- layouts ------------------------------------------------------------------


def test_same_seed_serializes_identically():
    a, b = generate_world(17), generate_world(17)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_object_count_matches_config():
    for seed in range(20):
        cfg = WorldConfig(num_objects=8 + seed % 5)
        world = generate_world(seed, cfg)
        assert len(world.objects) == cfg.num_objects
        assert len({o.cls for o in world.objects.values()}) == cfg.num_objects


def test_layout_invariants():
    for seed in range(50):
        w = generate_world(seed)
        assert all(w.in_bounds(x, y) for x, y in w.objects)
        assert w.free(w.x, w.y)
        assert all(1 <= o.cls < NUM_OBJECTS for o in w.objects.values())


def test_distinct_seeds_give_distinct_layouts():
    layouts = {json.dumps(generate_world(s).to_dict()["objects"]) for s in range(100)}
    assert len(layouts) == 100


def test_world_round_trips_through_dict():
    w = generate_world(3)
    assert World.from_dict(w.to_dict()) == w


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        WorldConfig(view=2)
    with pytest.raises(ValueError):
        WorldConfig(width=3, height=3, num_objects=9)


# --- simulator ----------------------------------------------------------------


def test_move_into_object_is_invalid():
    w = bare_world({(2, 1): Obj(APPLE)})
    with pytest.raises(InvalidAction):
        step(w, V.MOVE_AHEAD)


def test_pickup_needs_the_right_pitch():
    w = bare_world({(2, 1): Obj(APPLE)}, pitch=LEVEL)
    with pytest.raises(InvalidAction):
        step(w, V.PICKUP)
    w.pitch = DOWN
    step(w, V.PICKUP)
    assert w.held == APPLE and (2, 1) not in w.objects


def test_rotations_cycle():
    w = bare_world()
    for _ in range(4):
        step(w, V.ROTATE_RIGHT)
    assert w.heading == 0
    step(w, V.ROTATE_LEFT)
    assert w.heading == 3


# --- expert -------------------------------------------------------------------


def test_facing_target_gives_single_pickup():
    w = bare_world({(2, 1): Obj(APPLE)}, pitch=DOWN)
    assert plan_expert(w, Task("pickup", APPLE)) == [V.PICKUP]


def test_target_one_cell_ahead():
    w = bare_world({(2, 0): Obj(APPLE)}, pitch=DOWN)
    assert plan_expert(w, Task("pickup", APPLE)) == [V.MOVE_AHEAD, V.PICKUP]


def test_planner_leaves_world_untouched():
    w = bare_world({(2, 0): Obj(APPLE)}, pitch=DOWN)
    before = w.to_dict()
    plan_expert(w, Task("pickup", APPLE))
    assert w.to_dict() == before


def test_enclosed_target_is_unreachable():
    # the apple sits in a corner walled off by two other objects
    a, b = sorted(set(range(1, NUM_OBJECTS)) - {APPLE})[:2]
    w = bare_world({(0, 0): Obj(APPLE), (1, 0): Obj(a), (0, 1): Obj(b)})
    with pytest.raises(Unreachable):
        plan_expert(w, Task("pickup", APPLE))


def test_expert_replay_achieves_task():
    rng = np.random.default_rng(0)
    solved = 0
    for seed in range(100):
        world = generate_world(seed)
        task = sample_task(world, rng)
        try:
            actions = plan_expert(world, task)
        except Unreachable:
            continue
        assert all(0 <= a < 12 for a in actions)
        sim = world.copy()
        for a in actions:
            step(sim, a)
        assert task_achieved(sim, task), (seed, task)
        solved += 1
    assert solved >= 90


def test_sampled_episodes_replay_achieves_task():
    for layout in range(100):
        ep = sample_episode(layout, 0, "train")
        *_, final = replay(ep.world, ep.actions, ep.view)
        assert task_achieved(final, ep.task)


# --- sensors ------------------------------------------------------------------


def test_facing_wall_window_is_all_wall():
    w = bare_world(x=2, y=0, heading=0)
    frame = render_frame(w, 3)
    per = NUM_OBJECTS + 5
    cells = frame[: 9 * per].reshape(9, per)
    np.testing.assert_array_equal(cells[:, NUM_OBJECTS], 1.0)
    np.testing.assert_array_equal(np.delete(cells, NUM_OBJECTS, axis=1), 0.0)


def test_frame_length_matches_config():
    cfg = WorldConfig()
    assert render_frame(generate_world(0), cfg.view).shape == (cfg.frame_feature_len,)


def test_window_is_ahead_of_agent():
    w = bare_world(x=2, y=4, heading=0)
    assert visible_cells(w, 3)[:3] == [(1, 3), (2, 3), (3, 3)]


def _sweep(world, view):
    """Visit every free cell at every heading, accumulating the map."""
    grid = None
    maps = []
    sim = world.copy()
    for x in range(world.width):
        for y in range(world.height):
            if not world.free(x, y):
                continue
            for h in range(4):
                sim.x, sim.y, sim.heading = x, y, h
                grid = accumulate_map(grid, sim, view)
                maps.append(grid)
    return maps


def test_full_sweep_map_equals_layout():
    for seed in range(5):
        world = generate_world(seed)
        final = _sweep(world, 3)[-1]
        np.testing.assert_array_equal(final[1:], layout_map(world)[1:])
        assert final[0].all()


def test_map_is_monotone():
    maps = _sweep(generate_world(1), 3)
    for prev, nxt in zip(maps, maps[1:]):
        assert np.all(nxt >= prev)


# --- episodes -----------------------------------------------------------------


@pytest.fixture(scope="module")
def episodes():
    return generate_split("train", range(25), 2)


def test_episode_invariants(episodes):
    for ep in episodes:
        n = ep.n
        assert len(ep.frames) == len(ep.objects) == len(ep.maps) == n
        assert ep.actions[-1] == STOP
        assert np.all(ep.actions[:-1] < 12)
        assert PAD not in ep.actions
        assert n <= WorldConfig().max_len
        assert np.all(np.diff(ep.maps, axis=0) >= 0)


def test_token_ids_below_vocab_size(episodes):
    for ep in episodes:
        assert ep.tokens.min() >= 0 and ep.tokens.max() < VOCAB_SIZE
        assert V.VOCAB[ep.tokens[ep.goal_len - 1]] == V.GOAL_TOKEN


def test_object_labels(episodes):
    for ep in episodes:
        sim = ep.world.copy()
        for a, label in zip(ep.actions, ep.objects):
            if a == V.PICKUP:
                assert label == sim.objects[sim.ahead()].cls
            elif a in (V.MOVE_AHEAD, V.ROTATE_LEFT, V.ROTATE_RIGHT, V.LOOK_UP, V.LOOK_DOWN, STOP):
                assert label == V.NO_OBJECT
            step(sim, int(a))


def test_pickup_label_by_hand():
    w = bare_world({(2, 0): Obj(APPLE)}, pitch=DOWN)
    ep = emit_episode(w, Task("pickup", APPLE), seed=0)
    assert list(ep.actions) == [V.MOVE_AHEAD, V.PICKUP, STOP]
    assert list(ep.objects) == [V.NO_OBJECT, APPLE, V.NO_OBJECT]


def test_replay_reproduces_frames_and_maps(episodes):
    for ep in episodes:
        frames, maps, labels, _ = replay(ep.world, ep.actions, ep.view)
        np.testing.assert_array_equal(frames, ep.frames)
        np.testing.assert_array_equal(maps, ep.maps)
        np.testing.assert_array_equal(labels, ep.objects)


def test_sample_episode_is_deterministic():
    assert sample_episode(7, 1, "seen").equals(sample_episode(7, 1, "seen"))


def test_seen_and_unseen_layouts_disjoint():
    train = generate_split("train", range(5), 1)
    seen = generate_split("seen", range(5), 1)
    unseen = generate_split("unseen", range(1_000_000, 1_000_005), 1)
    train_layouts = {ep.layout_seed for ep in train}
    assert {ep.layout_seed for ep in seen} <= train_layouts
    assert not {ep.layout_seed for ep in unseen} & train_layouts
    assert not any(a.equals(b) for a, b in zip(train, seen))


def test_write_read_round_trip(tmp_path):
    eps = generate_split("train", range(25), 2)
    assert len(eps) == 50
    path = tmp_path / "d.jsonl"
    assert write_dataset(eps, path) == 50
    back = read_dataset(path)
    assert len(back) == 50
    assert all(a.equals(b) for a, b in zip(eps, back))


def test_malformed_file_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    write_dataset(generate_split("train", range(2), 1), path)
    with path.open("a") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetFormatError, match=r"bad\.jsonl:3"):
        read_dataset(path)


def test_wrong_schema_rejected(tmp_path):
    path = tmp_path / "old.jsonl"
    rec = sample_episode(0, 0, "train").to_record()
    rec["schema"] = 99
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DatasetFormatError, match=":1:"):
        read_dataset(path)
