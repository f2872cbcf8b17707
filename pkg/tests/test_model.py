import hashlib

import numpy as np
import pytest

from liam.model import ModelConfig, build_fusion_input, build_params, forward, forward_episode
from liam.params import GROUPS, ParamStore, group_of


def digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def test_output_shapes(model_params, model_cfg, train_episodes):
    ep = train_episodes[0]
    a, o, g = forward_episode(model_params, model_cfg, ep)
    assert a.shape == (ep.n, 14) and o.shape == (ep.n, 85) and g.shape == (ep.n,)
    assert a.dtype == np.float32


def test_temperatures_start_at_initial_value(model_params):
    assert model_params["temperature.ia"].data.tolist() == pytest.approx([0.07])
    assert model_params["temperature.ti"].data.tolist() == pytest.approx([0.07])


def test_every_parameter_in_a_known_group(model_params):
    assert {group_of(k) for k in model_params} == set(GROUPS)


def test_parameter_init_independent_of_other_parameters():
    small = build_params(ModelConfig(layers=1), seed=5)
    big = build_params(ModelConfig(layers=3), seed=5)
    for name in small:
        np.testing.assert_array_equal(small[name].data, big[name].data)


def test_same_seed_same_parameters_different_seed_different():
    a, b, c = build_params(ModelConfig(), 1), build_params(ModelConfig(), 1), build_params(ModelConfig(), 2)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["frame.w1"].data, c["frame.w1"].data)


def test_param_store_rejects_duplicates_and_unknown_groups():
    store = ParamStore()
    store.constant("heads.x", (2,), 0.0)
    with pytest.raises(KeyError):
        store.constant("heads.x", (2,), 0.0)
    with pytest.raises(KeyError):
        store.constant("mystery.x", (2,), 0.0)


def test_map_disabled_drops_map_tokens(model_params, model_cfg, train_episodes):
    ep = train_episodes[1]
    on = build_fusion_input(model_params, model_cfg, ep.tokens, ep.frames, ep.actions, ep.maps)
    off = build_fusion_input(model_params, model_cfg, ep.tokens, ep.frames, ep.actions, None)
    assert on.tokens.shape[0] == ep.m + 3 * ep.n
    assert off.tokens.shape[0] == ep.m + 2 * ep.n
    # language, frame and action encodings are the same bytes either way
    k = ep.m + 2 * ep.n
    assert digest(on.tokens.data[:k]) == digest(off.tokens.data)


def test_map_enabled_changes_predictions(model_params, model_cfg, train_episodes):
    ep = train_episodes[2]
    a_on = forward_episode(model_params, model_cfg, ep, map_enabled=True)[0].data
    a_off = forward_episode(model_params, model_cfg, ep, map_enabled=False)[0].data
    assert not np.array_equal(a_on, a_off)


def _perturbed_rows(model_params, model_cfg, ep, t, rng, with_map):
    maps = ep.maps if with_map else None
    base = forward(model_params, model_cfg, ep.tokens, ep.frames, ep.actions, maps)[0].data[t]
    frames, acts = ep.frames.copy(), ep.actions.copy()
    maps2 = None if maps is None else maps.copy()
    for s in range(t, ep.n):
        acts[s] = rng.integers(0, 14)
    for s in range(t + 1, ep.n):
        frames[s] = rng.random(frames.shape[1])
        if maps2 is not None:
            maps2[s] = rng.random(maps2.shape[1:])
    after = forward(model_params, model_cfg, ep.tokens, frames, acts, maps2)[0].data[t]
    return base, after


@pytest.mark.parametrize("with_map", [True, False])
def test_no_future_or_label_leakage(model_params, model_cfg, train_episodes, with_map):
    rng = np.random.default_rng(0)
    for ep in train_episodes[:6]:
        for t in range(ep.n):
            base, after = _perturbed_rows(model_params, model_cfg, ep, t, rng, with_map)
            np.testing.assert_array_equal(base, after)


def test_past_inputs_do_influence_predictions(model_params, model_cfg, train_episodes):
    ep = next(e for e in train_episodes if e.n >= 4)
    base = forward_episode(model_params, model_cfg, ep)[0].data[3]
    acts = ep.actions.copy()
    acts[1] = (acts[1] + 1) % 12
    assert not np.array_equal(base, forward_episode(model_params, model_cfg, ep, actions=acts)[0].data[3])


def test_forward_is_deterministic(model_params, model_cfg, train_episodes):
    ep = train_episodes[3]
    a = [x.data for x in forward_episode(model_params, model_cfg, ep)]
    b = [x.data for x in forward_episode(model_params, model_cfg, ep)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_length_mismatch_rejected(model_params, model_cfg, train_episodes):
    ep = train_episodes[0]
    with pytest.raises(ValueError):
        forward(model_params, model_cfg, ep.tokens, ep.frames[:-1], ep.actions, None)
