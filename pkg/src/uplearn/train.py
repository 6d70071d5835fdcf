"""Plain SGD with validation-F1 epoch selection."""
from __future__ import annotations

import dataclasses
import math
import time
from typing import Callable, Sequence

import numpy as np

from .core import LabeledRecord, Observed, stack_windows
from .metrics import Confusion, f1
from .model import Arch, ModelState, TrainConfig, grad, init_model, predict_batch
from .risk import WeightedBatch


class SelectionError(ValueError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class TrainResult:
    model: ModelState
    epochs_run: int
    best_epoch: int
    val_f1_at_best: float
    seconds_per_epoch: float
    val_confusion: Confusion
    epoch_f1: tuple[float, ...] = ()


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_validation(records: Sequence[LabeledRecord], fraction: float, seed: int):
    """Stratified hold-out drawn from certain-labelled records only.

    Positives and negatives are sampled independently at ``fraction`` (rounded
    half up).  At least one positive goes to each side.  Uncertain records always
    stay in the training part.  Both outputs keep the input order.
    """
    if not 0.0 < fraction < 0.5:
        raise ValueError("fraction must lie in (0, 0.5)")
    pos = [i for i, r in enumerate(records) if r.observed is Observed.CERTAIN_POSITIVE]
    neg = [i for i, r in enumerate(records) if r.observed is Observed.CERTAIN_NEGATIVE]
    if len(pos) < 2:
        raise SelectionError(f"need at least 2 certain positives for a validation split, got {len(pos)}")
    rng = np.random.default_rng(seed)
    k_pos = min(max(1, _half_up(fraction * len(pos))), len(pos) - 1)
    k_neg = _half_up(fraction * len(neg))
    chosen = set(rng.permutation(pos)[:k_pos].tolist()) | set(rng.permutation(neg)[:k_neg].tolist())
    train = [r for i, r in enumerate(records) if i not in chosen]
    val = [r for i, r in enumerate(records) if i in chosen]
    return train, val


def certain_targets(records: Sequence[LabeledRecord]) -> np.ndarray:
    out = np.empty(len(records), dtype=np.int8)
    for i, r in enumerate(records):
        if not r.observed.is_certain:
            raise SelectionError(f"validation record {r.id!r} is not certain-labelled ({r.observed.value})")
        out[i] = 1 if r.observed is Observed.CERTAIN_POSITIVE else 0
    return out


def evaluate(model: ModelState, X: np.ndarray, y: np.ndarray, threshold: float) -> Confusion:
    return Confusion.from_labels(y, predict_batch(model, X, threshold))


def fit(
    arch,
    batch_builder: Callable[[Sequence[LabeledRecord]], WeightedBatch],
    train_records: Sequence[LabeledRecord],
    val_records: Sequence[LabeledRecord],
    cfg: TrainConfig,
) -> TrainResult:
    """Train from fresh initialisation; keep the epoch with the best validation F1.

    Ties go to the earliest epoch.
    """
    if not train_records or not val_records:
        raise ValueError("fit needs non-empty training and validation records")
    y_val = certain_targets(val_records)
    if y_val.sum() == 0:
        raise SelectionError("F1 undefined for selection: validation set has no positives")
    X_val = stack_windows(val_records)

    arch = Arch.parse(arch)
    batch = batch_builder(train_records)
    model = init_model(arch, batch.X.shape[1:], seed=cfg.seed, init_scale=cfg.init_scale)
    theta = np.array(model.theta)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    n = len(batch)

    best = None
    times = []
    scores = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            w = batch.weights[idx]
            if w.sum() <= 0.0:
                continue
            sub = WeightedBatch(batch.X[idx], w, batch.targets[idx])
            theta -= cfg.learning_rate * grad(model.with_theta(theta), sub)
        times.append(max(time.perf_counter() - t0, 1e-9))

        model = model.with_theta(theta)
        conf = evaluate(model, X_val, y_val, cfg.decision_threshold)
        score = f1(conf)
        scores.append(score)
        if best is None or score > best[1]:
            best = (epoch, score, model, conf)

    epoch, score, model, conf = best
    return TrainResult(
        model=model,
        epochs_run=cfg.epochs,
        best_epoch=epoch,
        val_f1_at_best=score,
        seconds_per_epoch=float(np.mean(times)),
        val_confusion=conf,
        epoch_f1=tuple(scores),
    )
