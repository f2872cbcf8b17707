"""Sequence-labelling metrics and the metrics CSV writer."""
from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..worldgen.vocab import PAD


def _flatten(predictions, targets, pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions for {t.size} targets")
    keep = t != pad_id
    if not keep.any():
        raise ValueError("no non-pad positions to score")
    return p[keep], t[keep]


def accuracy(predictions, targets, pad_id: int = PAD) -> float:
    """Fraction of non-pad target positions predicted exactly."""
    p, t = _flatten(predictions, targets, pad_id)
    return float(np.mean(p == t))


def macro_f1(predictions, targets, pad_id: int = PAD) -> float:
    """Unweighted mean F1 over the classes that occur in the targets or predictions.

    Positions whose target is padding are excluded. A predicted pad at a
    non-pad position counts as an error but pad never becomes a class of its own.
    """
    p, t = _flatten(predictions, targets, pad_id)
    classes = np.union1d(np.unique(t), np.unique(p[p != pad_id]))
    scores = []
    for c in classes:
        tp = np.sum((p == c) & (t == c))
        fp = np.sum((p == c) & (t != c))
        fn = np.sum((p != c) & (t == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


class MetricsWriter:
    """Append-only CSV with a fixed column order; floats written with ``repr``."""

    def __init__(self, path: str | os.PathLike, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(self.columns)

    def write(self, row: dict) -> None:
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown metric columns {sorted(unknown)}")
        cells = [_cell(row.get(c, "")) for c in self.columns]
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(cells)

    def write_all(self, rows: Iterable[dict]) -> None:
        for r in rows:
            self.write(r)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)
