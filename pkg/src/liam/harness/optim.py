"""Gradient-descent optimizers over a :class:`ParamStore`.

Frozen groups are never touched, and both temperatures are clamped back into
``[TAU_MIN, TAU_MAX]`` after every step.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..contrastive import TAU_MAX, TAU_MIN
from ..params import ParamStore, group_of


def clamp_temperatures(params: ParamStore) -> None:
    for name, t in params.group("temperature").items():
        t.data = np.clip(t.data, TAU_MIN, TAU_MAX).astype(t.dtype)


def compute_grads(params: ParamStore, loss: Tensor) -> dict[str, np.ndarray]:
    """Backpropagate ``loss``; parameters it does not reach get zero gradients."""
    for t in params.values():
        t.grad = None
    ad.backward(loss)
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}


class Optimizer:
    def __init__(self, params: ParamStore, lr: float, freeze: Iterable[str] = ()):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = float(lr)
        self.freeze = frozenset(freeze)
        self.step_count = 0

    def trainable(self) -> list[str]:
        return [k for k, t in self.params.items() if t.requires_grad and group_of(k) not in self.freeze]

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        for name in self.trainable():
            t = self.params[name]
            t.data = (t.data - self._update(name, grads[name])).astype(t.dtype)
        clamp_temperatures(self.params)

    def _update(self, name: str, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        self.step_count = step_count


class SGD(Optimizer):
    """Plain gradient descent with a fixed learning rate, no momentum."""

    def _update(self, name, grad):
        return self.lr * grad


class Adam(Optimizer):
    def __init__(self, params, lr, freeze=(), beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr, freeze)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def _update(self, name, grad):
        b1, b2 = self.beta1, self.beta2
        self.m[name] = b1 * self.m[name] + (1 - b1) * grad
        self.v[name] = b2 * self.v[name] + (1 - b2) * grad * grad
        m_hat = self.m[name] / (1 - b1 ** self.step_count)
        v_hat = self.v[name] / (1 - b2 ** self.step_count)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self):
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        return out

    def load_state_arrays(self, arrays, step_count):
        super().load_state_arrays(arrays, step_count)
        for k in self.m:
            if f"m/{k}" in arrays:
                self.m[k] = np.array(arrays[f"m/{k}"], dtype=self.m[k].dtype)
                self.v[k] = np.array(arrays[f"v/{k}"], dtype=self.v[k].dtype)


def make_optimizer(kind: str, params: ParamStore, lr: float, freeze: Iterable[str] = ()) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr, freeze)
    if kind == "adam":
        return Adam(params, lr, freeze)
    raise ValueError(f"unknown optimizer {kind!r}")
