"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Every quantity that needs a gradient is a :class:`Tensor`. Operations are
plain functions that return new tensors and remember how to push a gradient
back to their inputs. :func:`backward` orders the recorded operations into a
:class:`Tape` and runs them in reverse.

Shapes are never broadcast implicitly. The only alignment rules are a
trailing-axis bias add (:func:`add_bias`) and multiplication by a scalar
(:func:`scale`); everything else must match exactly.

Training runs in float32. float64 exists for gradient verification.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "Tape", "ShapeError", "NonFiniteError", "ZeroNormError",
    "tensor", "backward", "finite_difference_check",
    "add", "sub", "add_bias", "scale", "reciprocal", "matmul", "transpose",
    "reshape", "concat", "take", "embedding", "conv1d", "mean", "sum",
    "global_avg_pool", "l2_normalize", "softmax", "log_softmax", "layer_norm",
    "gelu", "sigmoid", "cosine_similarity", "cross_entropy", "kl_div", "mse",
    "clamp",
]

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, op: str):
        super().__init__(f"operation '{op}' produced non-finite values")
        self.op = op


class ZeroNormError(ValueError):
    pass


class Tensor:
    """Dense float array with an optional gradient.

    ``data`` is a C-contiguous (row-major) numpy array of float32 or float64.
    Non-leaf tensors keep a reference to their parents and a closure that maps
    the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        arr = np.ascontiguousarray(data, dtype=dtype)
        if arr.size == 0:
            raise ShapeError("tensor extents must be positive")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    # operator sugar; all of it lowers to the functions below
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, Tensor):
            return scale(self, reciprocal(c))
        return scale(self, 1.0 / c)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad, dtype)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, out: np.ndarray, parents: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(op)
    t = Tensor.__new__(Tensor)
    t.data = np.ascontiguousarray(out)
    t.grad = None
    t.op = op
    t.requires_grad = any(p.requires_grad for p in parents)
    if t.requires_grad:
        t._parents = tuple(parents)
        t._backward = grad_fn
    else:
        t._parents = ()
        t._backward = None
    return t


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _result_dtype(*ts: Tensor):
    return np.result_type(*(t.dtype for t in ts))


# ---------------------------------------------------------------------------
# Tape and backward pass


class Tape:
    """Operations reachable from a loss, in execution (topological) order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        return cls(order)

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> list[Tensor]:
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = g if g is not None else np.zeros_like(node.data)
                continue
            if g is None:
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=p.dtype)
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        return self.leaves


def backward(loss: Tensor) -> list[Tensor]:
    """Populate ``.grad`` on every requires-grad leaf reachable from ``loss``.

    Gradients are overwritten, not accumulated, so repeating the call on the
    same graph gives identical results. Returns the leaves that were written.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return []
    return Tape.from_loss(loss).backward(loss)


# ---------------------------------------------------------------------------
# Elementwise and structural ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` where ``b`` has exactly the shape of ``x``'s trailing axis."""
    x, b = _as_tensor(x), _as_tensor(b)
    if b.shape != x.shape[-1:]:
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match trailing axis of {x.shape}")
    lead = tuple(range(x.ndim - 1))
    return _make("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=lead)))


def scale(x: Tensor, c) -> Tensor:
    """Multiply by a Python scalar or a single-element tensor."""
    x = _as_tensor(x)
    if isinstance(c, Tensor):
        if c.size != 1:
            raise ShapeError(f"scale: factor must have one element, got shape {c.shape}")
        cv = c.data.reshape(())
        return _make(
            "scale",
            x.data * cv,
            (x, c),
            lambda g: (g * cv, np.sum(g * x.data).reshape(c.shape)),
        )
    c = float(c)
    return _make("scale", x.data * np.asarray(c, dtype=x.dtype), (x,), lambda g: (g * c,))


def reciprocal(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data == 0):
        raise ZeroDivisionError("reciprocal of zero")
    out = 1.0 / x.data
    return _make("reciprocal", out, (x,), lambda g: (-g * out * out,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _make("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return _make("transpose", x.data.T, (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat of nothing")
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != axis % len(ref)):
            raise ShapeError(f"concat: shape mismatch {xs[0].shape} vs {x.shape} along axis {axis}")
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
    out = np.concatenate([x.data for x in xs], axis=axis).astype(_result_dtype(*xs), copy=False)
    return _make("concat", out, xs, lambda g: tuple(np.split(g, splits, axis=axis)))


def take(x: Tensor, index) -> Tensor:
    """Basic or integer-array indexing; the gradient scatters back with add."""
    x = _as_tensor(x)
    out = np.array(x.data[index], copy=True)
    if out.size == 0:
        raise ShapeError(f"take: index selects nothing from shape {x.shape}")

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make("take", out, (x,), grad_fn)


def embedding(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding ids must be one-dimensional, got shape {ids.shape}")
    rows = table.shape[0]
    bad = np.flatnonzero((ids < 0) | (ids >= rows))
    if bad.size:
        raise IndexError(f"embedding id {int(ids[bad[0]])} at position {int(bad[0])} outside table of {rows} rows")

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make("embedding", table.data[ids], (table,), grad_fn)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid 1-D convolution.

    x: (batch, length, in_channels); w: (width, in_channels, out_channels);
    b: (out_channels,). Returns (batch, length - width + 1, out_channels).
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1] or b.shape != (w.shape[2],):
        raise ShapeError(f"conv1d: incompatible shapes x={x.shape} w={w.shape} b={b.shape}")
    width = w.shape[0]
    out_len = x.shape[1] - width + 1
    if out_len < 1:
        raise ShapeError(f"conv1d: sequence length {x.shape[1]} shorter than kernel width {width}")
    out = np.zeros((x.shape[0], out_len, w.shape[2]), dtype=_result_dtype(x, w))
    for k in range(width):
        out += x.data[:, k:k + out_len, :] @ w.data[k]
    out += b.data

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for k in range(width):
            gx[:, k:k + out_len, :] += g @ w.data[k].T
            gw[k] = np.einsum("blc,blo->co", x.data[:, k:k + out_len, :], g)
        return gx, gw, g.sum(axis=(0, 1))

    return _make("conv1d", out, (x, w, b), grad_fn)


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    out = np.sum(x.data, axis=axis)

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", np.asarray(out), (x,), grad_fn)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    x = _as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    out = np.mean(x.data, axis=axis)

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make("mean", np.asarray(out, dtype=x.dtype), (x,), grad_fn)


def global_avg_pool(x: Tensor, axis: int) -> Tensor:
    """Average over one axis (the pooled axis disappears)."""
    return mean(x, axis=axis)


def l2_normalize(x: Tensor) -> Tensor:
    """Scale every vector along the last axis to unit length.

    A zero vector has no direction and raises :class:`ZeroNormError`.
    """
    x = _as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=-1, keepdims=True))
    if np.any(norm == 0):
        raise ZeroNormError("cannot L2-normalize a zero vector")
    y = x.data / norm

    def grad_fn(g):
        return ((g - y * np.sum(g * y, axis=-1, keepdims=True)) / norm,)

    return _make("l2_normalize", y, (x,), grad_fn)


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (boolean, same shape, True = allowed) gives blocked entries a
    probability of exactly zero. Every row needs at least one allowed entry.
    """
    x = _as_tensor(x)
    if mask is None:
        z = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {mask.shape} vs input {x.shape}")
        if not np.all(mask.any(axis=-1)):
            raise ValueError("softmax: a row has no allowed entries")
        masked = np.where(mask, x.data, -np.inf)
        z = masked - masked.max(axis=-1, keepdims=True)
        e = np.where(mask, np.exp(z), 0.0)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)

    def grad_fn(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _make("softmax", y, (x,), grad_fn)


def _log_softmax_array(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def log_softmax(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = _log_softmax_array(x.data)
    p = np.exp(out)
    return _make("log_softmax", out, (x,), lambda g: (g - p * np.sum(g, axis=-1, keepdims=True),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs features {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def grad_fn(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(gx_hat * xhat, axis=-1, keepdims=True))
        return gx, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return _make("layer_norm", out, (x, gain, bias), grad_fn)


_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    out = (x.data * cdf).astype(x.dtype, copy=False)

    def grad_fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _make("gelu", out, (x,), grad_fn)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """(R, d) x (C, d) -> (R, C) matrix of cosines."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_similarity: incompatible shapes {a.shape} and {b.shape}")
    return matmul(l2_normalize(a), transpose(l2_normalize(b)))


def _target_array(x: Tensor, target, op: str) -> np.ndarray:
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=x.dtype)
    if t.shape != x.shape:
        raise ShapeError(f"{op}: target shape {t.shape} vs input {x.shape}")
    return t


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Per-row ``-sum(target * log_softmax(logits))`` over the last axis.

    ``target`` is a constant distribution with the shape of ``logits``.
    Returns one value per row.
    """
    logits = _as_tensor(logits)
    t = _target_array(logits, target, "cross_entropy")
    logp = _log_softmax_array(logits.data)
    out = -np.sum(t * logp, axis=-1)
    p = np.exp(logp)
    tsum = t.sum(axis=-1, keepdims=True)
    return _make("cross_entropy", out, (logits,), lambda g: (g[..., None] * (p * tsum - t),))


def kl_div(logits: Tensor, target) -> Tensor:
    """Per-row ``KL(target || softmax(logits))`` with ``0 log 0 = 0``."""
    logits = _as_tensor(logits)
    t = _target_array(logits, target, "kl_div")
    logp = _log_softmax_array(logits.data)
    pos = t > 0
    tlogt = np.where(pos, t * np.log(np.where(pos, t, 1.0)), 0.0)
    out = np.sum(tlogt - t * logp, axis=-1)
    p = np.exp(logp)
    tsum = t.sum(axis=-1, keepdims=True)
    return _make("kl_div", out, (logits,), lambda g: (g[..., None] * (p * tsum - t),))


def mse(pred: Tensor, target) -> Tensor:
    pred = _as_tensor(pred)
    t = _target_array(pred, target, "mse")
    diff = pred.data - t
    n = pred.size
    return _make("mse", np.asarray(np.mean(diff * diff), dtype=pred.dtype), (pred,),
                 lambda g: (g * 2.0 * diff / n,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``.

    Gradient is 0 where the input lies strictly outside the interval and 1
    elsewhere, including exactly on a bound.
    """
    x = _as_tensor(x)
    if lo > hi:
        raise ValueError(f"clamp: lower bound {lo} above upper bound {hi}")
    inside = (x.data >= lo) & (x.data <= hi)
    return _make("clamp", np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# Verification


def finite_difference_check(
    f: Callable[..., Tensor],
    *points,
    step: float = 1e-5,
    analytic_dtype=np.float64,
) -> float:
    """Largest relative error between the analytic gradient and central differences.

    ``f`` maps one tensor per entry of ``points`` to a scalar tensor. The
    central differences are always taken in float64; ``analytic_dtype``
    selects the precision of the backward pass being checked. The error for a
    coordinate is ``|analytic - fd| / max(1, |fd|)``.
    """
    base = [np.array(p, dtype=np.float64) for p in points]
    inputs = [Tensor(p.astype(analytic_dtype), requires_grad=True) for p in base]
    loss = f(*inputs)
    if loss.size != 1:
        raise ShapeError(f"finite_difference_check needs a scalar function, got shape {loss.shape}")
    backward(loss)

    def value(arrays: Iterable[np.ndarray]) -> float:
        return f(*[Tensor(a) for a in arrays]).item()

    worst = 0.0
    for k, p in enumerate(base):
        analytic = inputs[k].grad
        analytic = np.zeros_like(p) if analytic is None else analytic.astype(np.float64)
        for i in range(p.size):
            shifted = [q.copy() for q in base]
            shifted[k].flat[i] += step
            f_plus = value(shifted)
            shifted[k].flat[i] -= 2 * step
            f_minus = value(shifted)
            fd = (f_plus - f_minus) / (2 * step)
            err = abs(analytic.flat[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst
