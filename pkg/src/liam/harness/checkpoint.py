"""Named-tensor checkpoint archive.

Layout::

    b"LIAMCKPT" | u32 version | u64 header length | JSON header | payload

The header holds a manifest entry ``{name, dtype, shape, offset, nbytes}``
per tensor plus run metadata (stage, config and model hashes, step, the
resolved config). The payload is the tensors' little-endian bytes, back to
back, in manifest order.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"LIAMCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    stage: str
    config_hash: str
    model_hash: str
    step: int = 0
    config: dict[str, Any] = field(default_factory=dict)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)

    def params(self) -> dict[str, np.ndarray]:
        return self.tensors

    def check_resume(self, config_hash: str) -> None:
        if config_hash != self.config_hash:
            raise ConfigMismatchError(
                f"checkpoint was written by config {self.config_hash}, refusing to resume with {config_hash}"
            )

    def check_model(self, model_hash: str) -> None:
        if model_hash != self.model_hash:
            raise ConfigMismatchError(
                f"checkpoint architecture {self.model_hash} does not match config architecture {model_hash}"
            )


def _little_endian(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    manifest = []
    chunks = []
    offset = 0
    entries = [("param", k, v) for k, v in ckpt.tensors.items()]
    entries += [("optim", k, v) for k, v in ckpt.optimizer.items()]
    for kind, name, arr in entries:
        arr = _little_endian(np.asarray(arr))
        raw = arr.tobytes()
        manifest.append({"kind": kind, "name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                         "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({
        "stage": ckpt.stage,
        "config_hash": ckpt.config_hash,
        "model_hash": ckpt.model_hash,
        "step": ckpt.step,
        "config": ckpt.config,
        "manifest": manifest,
    }, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = memoryview(blob)[start + hlen:]
    tensors, optim = {}, {}
    for e in header["manifest"]:
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: tensor {e['name']!r} runs past the end of the file")
        arr = np.frombuffer(payload[e["offset"]:end], dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
        (tensors if e["kind"] == "param" else optim)[e["name"]] = arr
    return Checkpoint(tensors, header["stage"], header["config_hash"], header["model_hash"],
                      header["step"], header["config"], optim)
