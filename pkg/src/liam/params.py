"""Named parameter storage.

Parameters are grouped by the prefix before the first dot (``frame.w1`` is in
group ``frame``). Initialisation draws each tensor from a generator keyed by
``(seed, name)``, so a parameter's initial value does not depend on which
other parameters exist.
"""
from __future__ import annotations

import zlib
from typing import Iterator, Mapping

import numpy as np

from .autodiff import Tensor

GROUPS = ("text", "frame", "action", "pair", "map", "fusion", "heads", "temperature")


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


def param_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


class ParamStore(Mapping[str, Tensor]):
    """Ordered name -> Tensor mapping; every tensor is a trainable leaf."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.dtype = dtype
        self._params: dict[str, Tensor] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already defined")
        if group_of(name) not in GROUPS:
            raise KeyError(f"parameter {name!r} is not in a known group {GROUPS}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def normal(self, name: str, shape, std: float) -> Tensor:
        return self.add(name, param_rng(self.seed, name).normal(0.0, std, size=shape))

    def constant(self, name: str, shape, value: float) -> Tensor:
        return self.add(name, np.full(shape, value))

    def group(self, group: str) -> dict[str, Tensor]:
        return {k: v for k, v in self._params.items() if group_of(k) == group}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> list[str]:
        """Copy values in by name; returns the names that were loaded."""
        missing = [k for k in self._params if k not in arrays]
        if strict and missing:
            raise KeyError(f"missing parameters: {missing}")
        loaded = []
        for k, v in arrays.items():
            if k not in self._params:
                if strict:
                    raise KeyError(f"unexpected parameter {k!r}")
                continue
            if v.shape != self._params[k].shape:
                raise ValueError(f"parameter {k!r}: shape {v.shape} vs {self._params[k].shape}")
            self._params[k].data = np.array(v, dtype=self.dtype)
            loaded.append(k)
        return loaded

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(self.seed, dtype)
        for k, v in self._params.items():
            out._params[k] = Tensor(v.data.astype(dtype), requires_grad=True)
        return out
