"""Synthetic drifting fleet of imbalanced monitoring windows.

Negatives are stationary Gaussian noise around per-channel baselines.  Positives
sit at ``baseline + positive_shift + (k - 1) * drift_per_phase`` in phase ``k``
and additionally ramp linearly over the window on channels tagged
``error_counter``.  Each phase draws from its own stream seeded by
``(seed, phase)``, so phases can be generated in any order.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LabeledRecord, Oracle, PhaseDataset

CHANNEL_TAGS = ("timer", "counter", "physical", "error_counter")

DEFAULT_TAGS = ("timer", "counter", "counter", "physical", "physical", "error_counter")
DEFAULT_SHIFT = (0.0, 1.2, 1.2, 0.0, 0.0, 0.0)
DEFAULT_DRIFT = (0.0, -0.2, -0.2, 0.2, 0.2, 0.0)
EPOCH_DATE = dt.date(2020, 1, 1)


@dataclasses.dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    phases: int = 5
    records_per_phase: int = 4000
    l: int = 8
    d: int = 6
    imbalance_rate: float = 0.01
    drift_per_phase: tuple[float, ...] = DEFAULT_DRIFT
    noise_sigma: float = 1.0
    degradation_slope: float = 1.0
    positive_shift: tuple[float, ...] = DEFAULT_SHIFT
    channel_tags: tuple[str, ...] = DEFAULT_TAGS
    baseline: tuple[float, ...] | None = None
    drift_both_classes: bool = False
    max_cells: int = 50_000_000

    def __post_init__(self) -> None:
        for name in ("drift_per_phase", "positive_shift", "channel_tags", "baseline"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))
        check_config(self)

    @property
    def baseline_vector(self) -> np.ndarray:
        return np.zeros(self.d) if self.baseline is None else np.asarray(self.baseline, dtype=np.float64)

    @property
    def error_channels(self) -> np.ndarray:
        return np.array([t == "error_counter" for t in self.channel_tags])


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def check_config(cfg: GeneratorConfig) -> None:
    if cfg.phases < 2:
        raise ConfigError("phases", "need at least 2 phases")
    if cfg.records_per_phase < 1:
        raise ConfigError("records_per_phase", "must be positive")
    if cfg.l < 1 or cfg.d < 1:
        raise ConfigError("l" if cfg.l < 1 else "d", "window dimensions must be positive")
    if not 0.0 < cfg.imbalance_rate < 0.5:
        raise ConfigError("imbalance_rate", "must lie in (0, 0.5)")
    if not cfg.noise_sigma > 0:
        raise ConfigError("noise_sigma", "must be > 0")
    for name in ("drift_per_phase", "positive_shift", "channel_tags"):
        if len(getattr(cfg, name)) != cfg.d:
            raise ConfigError(name, f"needs exactly d={cfg.d} entries")
    if cfg.baseline is not None and len(cfg.baseline) != cfg.d:
        raise ConfigError("baseline", f"needs exactly d={cfg.d} entries")
    bad = [t for t in cfg.channel_tags if t not in CHANNEL_TAGS]
    if bad:
        raise ConfigError("channel_tags", f"unknown tags {bad}; expected {CHANNEL_TAGS}")
    cells = cfg.phases * cfg.records_per_phase * cfg.l * cfg.d
    if cells > cfg.max_cells:
        raise ConfigError("max_cells", f"fleet needs {cells} cells, cap is {cfg.max_cells}")


def positive_count(cfg: GeneratorConfig) -> int:
    """Exact number of positives per phase.

    ``round(rate * n)``; if that is zero, ``ceil(rate * n)`` so no phase is empty.
    """
    n = cfg.records_per_phase
    k = int(math.floor(cfg.imbalance_rate * n + 0.5))
    return k if k > 0 else int(math.ceil(cfg.imbalance_rate * n))


def class_means(cfg: GeneratorConfig, phase: int) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free ``(l, d)`` mean windows of (negatives, positives) in ``phase``."""
    base = np.broadcast_to(cfg.baseline_vector, (cfg.l, cfg.d)).copy()
    drift = (phase - 1) * np.asarray(cfg.drift_per_phase, dtype=np.float64)
    ramp = np.linspace(0.0, 1.0, cfg.l)[:, None] if cfg.l > 1 else np.ones((1, 1))
    pos = base + np.asarray(cfg.positive_shift) + drift
    pos = pos + cfg.degradation_slope * ramp * cfg.error_channels[None, :]
    neg = base + drift if cfg.drift_both_classes else base
    return neg, pos


def generate_phase(cfg: GeneratorConfig, phase: int) -> PhaseDataset:
    rng = np.random.default_rng([cfg.seed, phase])
    n = cfg.records_per_phase
    labels = np.zeros(n, dtype=np.int8)
    labels[rng.choice(n, size=positive_count(cfg), replace=False)] = 1
    noise = rng.normal(0.0, cfg.noise_sigma, size=(n, cfg.l, cfg.d))
    neg, pos = class_means(cfg, phase)
    X = noise + np.where(labels[:, None, None] == 1, pos, neg)
    records = [
        LabeledRecord.create(f"T{phase}-{i:05d}", phase, X[i], int(labels[i]))
        for i in range(n)
    ]
    return PhaseDataset(phase, records)


def generate_fleet(cfg: GeneratorConfig) -> list[PhaseDataset]:
    check_config(cfg)
    return [generate_phase(cfg, k) for k in range(1, cfg.phases + 1)]


def channel_names(cfg: GeneratorConfig) -> list[str]:
    return [f"{tag}_{c}" for c, tag in enumerate(cfg.channel_tags)]


def write_phase_csv(path: "str | Path", phase: PhaseDataset, columns: Sequence[str]) -> None:
    """Write a phase in the ingest CSV format, one daily row per window step.

    All windows of phase ``k`` end on the last day of that phase; a positive
    record carries label 1 on its final row.
    """
    l = phase.shape[0]
    first = EPOCH_DATE + dt.timedelta(days=(phase.phase - 1) * l)
    dates = [(first + dt.timedelta(days=t)).isoformat() for t in range(l)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "date", "label", *columns])
        for r in phase.records:
            positive = r._oracle is Oracle.POSITIVE
            for t in range(l):
                label = 1 if positive and t == l - 1 else 0
                w.writerow([r.id, dates[t], label, *(repr(float(v)) for v in r.window[t])])


def write_fleet_csv(directory: "str | Path", phases: Sequence[PhaseDataset], columns: Sequence[str]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for ds in phases:
        p = directory / f"phase_{ds.phase}.csv"
        write_phase_csv(p, ds, columns)
        paths.append(p)
    return paths
