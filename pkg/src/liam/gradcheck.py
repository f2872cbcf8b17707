"""Finite-difference gradient suite over every primitive and every composite loss.

Each check is a scalar function of a few small random tensors. Elementwise
outputs are reduced with a fixed random weighting (a matmul against a
constant vector) so that every output coordinate contributes a distinct
gradient. Points are drawn away from the kinks of ``clamp``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .contrastive import build_affinity_targets, loss_image_action, loss_text_image, similarity_logits
from .fusion import build_causal_mask, multi_head_attention
from .losses import action_loss, goal_progress_loss, goal_progress_targets, object_loss, total_loss

TOLERANCE = {np.float32: 1e-4, np.float64: 1e-6}


@dataclass
class Check:
    name: str
    fn: Callable[..., Tensor]
    points: list[np.ndarray]


def _const(arr: np.ndarray, like: Tensor) -> Tensor:
    return Tensor(np.asarray(arr, dtype=like.dtype))


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    """``sum(out * weights)`` expressed with reshape and matmul."""
    flat = ad.reshape(out, (1, out.size))
    return ad.reshape(flat @ _const(weights.reshape(-1, 1), out), (1,))


def build_checks(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    r = lambda *shape: rng.normal(size=shape)  # noqa: E731
    w = lambda *shape: rng.normal(size=int(np.prod(shape)))  # noqa: E731
    checks: list[Check] = []

    def add(name, fn, *points):
        checks.append(Check(name, fn, list(points)))

    # primitives
    wa = w(3, 4)
    add("add", lambda a, b: _weighted(ad.add(a, b), wa), r(3, 4), r(3, 4))
    add("sub", lambda a, b: _weighted(ad.sub(a, b), wa), r(3, 4), r(3, 4))
    add("add_bias", lambda x, b: _weighted(ad.add_bias(x, b), wa), r(3, 4), r(4))
    add("scale", lambda x: _weighted(ad.scale(x, 1.7), wa), r(3, 4))
    add("scale_by_tensor", lambda x, c: _weighted(ad.scale(x, c), wa), r(3, 4), r(1))
    add("reciprocal", lambda x: _weighted(ad.reciprocal(x), wa), rng.uniform(0.5, 2.0, (3, 4)))
    wm = w(3, 5)
    add("matmul", lambda a, b: _weighted(ad.matmul(a, b), wm), r(3, 4), r(4, 5))
    add("transpose", lambda x: _weighted(ad.transpose(x), wa), r(4, 3))
    add("reshape", lambda x: _weighted(ad.reshape(x, (3, 4)), wa), r(2, 6))
    wc = w(5, 4)
    add("concat", lambda a, b: _weighted(ad.concat([a, b], axis=0), wc), r(2, 4), r(3, 4))
    w1 = w(3, 4)
    add("take", lambda x: _weighted(ad.take(x, np.array([2, 0, 2])), w1), r(4, 4))
    w2 = w(4, 3)
    add("embedding", lambda t: _weighted(ad.embedding(t, [1, 3, 1, 0]), w2), r(5, 3))
    w3 = w(2, 3, 4)
    add("conv1d", lambda x, k, b: _weighted(ad.conv1d(x, k, b), w3), r(2, 4, 3), r(2, 3, 4), r(4))
    w4 = w(3)
    add("sum", lambda x: _weighted(ad.sum(x, axis=1), w4), r(3, 4))
    w5 = w(4)
    add("mean", lambda x: _weighted(ad.mean(x, axis=0), w5), r(3, 4))
    w6 = w(2, 4)
    add("global_avg_pool", lambda x: _weighted(ad.global_avg_pool(x, axis=1), w6), r(2, 3, 4))
    add("l2_normalize", lambda x: _weighted(ad.l2_normalize(x), wa), r(3, 4))
    add("softmax", lambda x: _weighted(ad.softmax(x), wa), r(3, 4))
    mask = rng.random((3, 4)) < 0.6
    mask[:, 0] = True
    add("softmax_masked", lambda x: _weighted(ad.softmax(x, mask), wa), r(3, 4))
    add("log_softmax", lambda x: _weighted(ad.log_softmax(x), wa), r(3, 4))
    add("layer_norm", lambda x, g, b: _weighted(ad.layer_norm(x, g, b), wa), r(3, 4), r(4), r(4))
    add("gelu", lambda x: _weighted(ad.gelu(x), wa), r(3, 4))
    add("sigmoid", lambda x: _weighted(ad.sigmoid(x), wa), 3 * r(3, 4))
    add("cosine_similarity", lambda a, b: _weighted(ad.cosine_similarity(a, b), wm), r(3, 4), r(5, 4))
    dist = rng.dirichlet(np.ones(4), size=3)
    dist[0] = [0.0, 1.0, 0.0, 0.0]  # exercises 0 log 0
    w7 = w(3)
    add("cross_entropy", lambda x: _weighted(ad.cross_entropy(x, _const(dist, x)), w7), r(3, 4))
    w8 = w(3)
    add("kl_div", lambda x: _weighted(ad.kl_div(x, _const(dist, x)), w8), r(3, 4))
    target = r(3, 4)
    add("mse", lambda x: ad.reshape(ad.mse(x, _const(target, x)), (1,)), r(3, 4))
    away = rng.uniform(0.1, 0.9, (3, 4)) * rng.choice([-1, 1], (3, 4)) + rng.choice([-1.5, 0.0, 1.5], (3, 4))
    add("clamp", lambda x: _weighted(ad.clamp(x, -1.0, 1.0), wa), away)

    # composite losses
    ids = rng.integers(0, 12, size=8)
    ids[:3] = [4, 4, 7]  # repeated actions: multi-positive columns
    targets = build_affinity_targets(ids)
    u = len(targets.unique_actions)
    add("L_image_action", lambda p, a, t: ad.reshape(loss_image_action(similarity_logits(p, a, t), targets), (1,)),
        r(8, 6), r(u, 6), np.array([0.5]))
    add("L_text_image", lambda x, s, t: ad.reshape(loss_text_image(ad.l2_normalize(x), ad.l2_normalize(s), t), (1,)),
        r(3, 6), r(3, 6), np.array([0.3]))
    n = 7
    acts = rng.integers(0, 14, size=n)
    acts[-2:] = 13  # trailing padding
    pad = acts == 13
    objs = rng.integers(0, 85, size=n)
    gp = goal_progress_targets(n)
    add("L_action", lambda x: ad.reshape(action_loss(x, acts, pad), (1,)), r(n, 14))
    add("L_object", lambda x: ad.reshape(object_loss(x, objs, pad), (1,)), r(n, 85))
    add("L_gp", lambda x: ad.reshape(goal_progress_loss(ad.reshape(ad.sigmoid(x), (n,)), gp, pad), (1,)), r(n, 1))

    def l_total(xa, xo, xg):
        la = action_loss(xa, acts, pad)
        lo = object_loss(xo, objs, pad)
        lg = goal_progress_loss(ad.reshape(ad.sigmoid(xg), (n,)), gp, pad)
        return ad.reshape(total_loss(la, lo, lg), (1,))

    add("L_total", l_total, r(n, 14), r(n, 85), r(n, 1))

    # one fusion layer: masked multi-head attention, layer norm, residual
    fmask = build_causal_mask(2, 2, with_map=False)
    wf = w(6, 4)

    def fusion_layer(x, wq, wk, wv, wo):
        zeros = _const(np.zeros(4), x)
        params = {"f.wq": wq, "f.wk": wk, "f.wv": wv, "f.wo": wo, "f.bq": zeros, "f.bk": zeros,
                  "f.bv": zeros, "f.bo": zeros}
        attn = multi_head_attention(params, "f", x, fmask, heads=2)
        ones = _const(np.ones(4), x)
        return _weighted(ad.add(ad.layer_norm(attn, ones, zeros), x), wf)

    add("fusion_layer", fusion_layer, r(6, 4), *(r(4, 4) * 0.5 for _ in range(4)))
    return checks


def run_suite(seeds=range(10), dtypes=(np.float32, np.float64), step: float = 1e-5) -> list[dict]:
    """One result row per (check, dtype): worst error over ``seeds`` and whether it passes."""
    worst: dict[tuple[str, type], float] = {}
    for seed in seeds:
        for check in build_checks(seed):
            for dtype in dtypes:
                err = ad.finite_difference_check(check.fn, *check.points, step=step, analytic_dtype=dtype)
                key = (check.name, dtype)
                worst[key] = max(worst.get(key, 0.0), err)
    return [
        {"check": name, "dtype": np.dtype(dtype).name, "max_rel_error": err, "tolerance": TOLERANCE[dtype],
         "passed": err < TOLERANCE[dtype]}
        for (name, dtype), err in worst.items()
    ]
