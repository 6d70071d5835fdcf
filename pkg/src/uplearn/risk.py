"""Loss constructors for the updating strategies.

Each constructor turns labelled record sets into a :class:`WeightedBatch`; the
loss of a model on that batch is ``sum_i w_i bce(f(X_i), y_i) / sum_i w_i``
(see :func:`uplearn.model.loss`).  Expectations over a record set are realised
as weighted sample means.
"""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .core import ClassPrior, LabeledRecord


@dataclasses.dataclass(frozen=True, eq=False)
class WeightedBatch:
    X: np.ndarray
    weights: np.ndarray
    targets: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.int8)
        if self.X.shape[0] != w.size or w.size != y.size:
            raise ValueError("X, weights and targets must have the same length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("targets must be 0 or 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def items(self) -> list[tuple[np.ndarray, float, int]]:
        return [(self.X[i], float(self.weights[i]), int(self.targets[i])) for i in range(len(self))]

    def take(self, index) -> "WeightedBatch":
        ids = tuple(self.ids[i] for i in index) if self.ids else ()
        return WeightedBatch(self.X[index], self.weights[index], self.targets[index], ids)

    @staticmethod
    def concat(parts: Sequence["WeightedBatch"]) -> "WeightedBatch":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("nothing to concatenate")
        ids = sum((p.ids for p in parts), ()) if all(p.ids for p in parts) else ()
        return WeightedBatch(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.weights for p in parts]),
            np.concatenate([p.targets for p in parts]),
            ids,
        )


def _block(records, weight: float, target: int) -> WeightedBatch | None:
    if not records:
        return None
    recs = list(records)
    if isinstance(recs[0], LabeledRecord):
        X = np.stack([r.window for r in recs])
        ids = tuple(r.id for r in recs)
    else:
        X = np.stack([np.asarray(r, dtype=np.float64) for r in recs])
        ids = ()
    n = X.shape[0]
    return WeightedBatch(X, np.full(n, weight), np.full(n, target, dtype=np.int8), ids)


def _join(blocks) -> WeightedBatch:
    return WeightedBatch.concat([b for b in blocks if b is not None])


def standard_loss(X_p, X_n) -> WeightedBatch:
    """Class-prior weighted risk with empirical priors.

    Positives get ``pi_p / |X_p|``, negatives ``pi_n / |X_n|`` where
    ``pi_p = |X_p| / (|X_p| + |X_n|)``, so every record ends up weighted ``1/N``.
    """
    n_p, n_n = len(X_p), len(X_n)
    total = n_p + n_n
    if total == 0:
        raise ValueError("standard_loss needs at least one record")
    pi_p = n_p / total
    return _join([
        _block(X_p, pi_p / n_p, 1) if n_p else None,
        _block(X_n, (1.0 - pi_p) / n_n, 0) if n_n else None,
    ])


def uptake_loss(X_p, X_n, X_u, prior: ClassPrior, certain_full_weight: bool = False) -> WeightedBatch:
    """Uncertain-positive risk: each uncertain record is used as both classes.

    Default form: ``pi_p * mean bce([X_p, X_u], 1) + pi_n * mean bce([X_n, X_u], 0)``.
    Every uncertain record therefore appears twice, once with target 1 and
    weight ``pi_p / |X_p + X_u|`` and once with target 0 and weight
    ``pi_n / |X_n + X_u|``.

    With ``certain_full_weight`` the certain records keep unit weight in a pooled
    mean and only the uncertain pair is split ``pi_p`` / ``pi_n``.
    """
    n_p, n_n, n_u = len(X_p), len(X_n), len(X_u)
    if n_p + n_n + n_u == 0:
        raise ValueError("uptake_loss needs at least one record")
    pi_p, pi_n = prior.pi_p, prior.pi_n
    if certain_full_weight:
        unit = 1.0 / (n_p + n_n + n_u)
        return _join([
            _block(X_p, unit, 1),
            _block(X_n, unit, 0),
            _block(X_u, pi_p * unit, 1),
            _block(X_u, pi_n * unit, 0),
        ])
    pos = n_p + n_u
    neg = n_n + n_u
    w_pos = pi_p / pos if pos else 0.0
    w_neg = pi_n / neg if neg else 0.0
    return _join([
        _block(X_p, w_pos, 1),
        _block(X_n, w_neg, 0),
        _block(X_u, w_pos, 1),
        _block(X_u, w_neg, 0),
    ])


def naive_loss(X_p, X_n, X_u) -> WeightedBatch:
    """Uncertain positives taken at face value (target 1); plain mean BCE."""
    n = len(X_p) + len(X_n) + len(X_u)
    if n == 0:
        raise ValueError("naive_loss needs at least one record")
    return _join([_block(X_p, 1.0 / n, 1), _block(X_n, 1.0 / n, 0), _block(X_u, 1.0 / n, 1)])
