"""Confusion counts and precision / recall / F1.

Undefined ratios are returned as ``None``, never NaN.
"""
from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v}")
            object.__setattr__(self, name, int(v))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "Confusion":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape:
            raise ValueError("label arrays differ in shape")
        return cls(
            tp=int(np.sum(t & p)),
            fp=int(np.sum(~t & p)),
            tn=int(np.sum(~t & ~p)),
            fn=int(np.sum(t & ~p)),
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def precision(c: Confusion) -> float | None:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: Confusion) -> float | None:
    return _ratio(c.tp, c.tp + c.fn)


def f1_score(p: float | None, r: float | None) -> float | None:
    """Harmonic mean of given precision and recall values."""
    if p is None or r is None or p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def f1(c: Confusion) -> float | None:
    """F1 from counts, ``2tp / (2tp + fp + fn)``.

    Undefined only when the evaluated set holds no positives. A model that
    misses every positive scores 0 rather than Undefined, which keeps broken
    models inside averages instead of silently dropping them.
    """
    if c.positives == 0:
        return None
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def metrics(c: Confusion) -> tuple[float | None, float | None, float | None]:
    return precision(c), recall(c), f1(c)


def mean_defined(values) -> tuple[float | None, int]:
    """Mean over defined entries plus the number of skipped Undefined ones."""
    vals = [v for v in values if v is not None]
    skipped = len(values) - len(vals)
    return (sum(vals) / len(vals) if vals else None), skipped
