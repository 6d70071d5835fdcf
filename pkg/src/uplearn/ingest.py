"""SMART-style daily telemetry CSV -> phased sliding-window records.

CSV format: UTF-8, comma separated, header row, ISO dates (``YYYY-MM-DD``),
label column in {0, 1}, missing cells as empty strings.  The same layout is
written by :func:`uplearn.datagen.write_fleet_csv`.

Phases are ``K`` equal contiguous slices of the ingested date range.  By default
each id yields one record per phase: the window ending at that id's last row in
the phase, made of its ``l`` most recent rows.  A record is Positive when the
label is 1 on any day from the window start through ``horizon_days`` after the
window end.  z-score statistics come from phase 1 only.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .core import LabeledRecord, PhaseDataset

STD_FLOOR = 1e-8
NORMALIZATIONS = ("zscore_per_channel", "none")


class IngestError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class IngestConfig:
    path: "str | Path | tuple"
    feature_columns: tuple[str, ...]
    label_column: str = "label"
    id_column: str = "id"
    date_column: str = "date"
    window_length: int = 30
    phases: int = 5
    normalization: str = "zscore_per_channel"
    horizon_days: int = 7
    stride: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if isinstance(self.path, (list, tuple)):
            object.__setattr__(self, "path", tuple(str(p) for p in self.path))
        if not self.feature_columns:
            raise IngestError("feature_columns must not be empty")
        if self.window_length < 1:
            raise IngestError("window_length must be >= 1")
        if self.phases < 1:
            raise IngestError("phases must be >= 1")
        if self.normalization not in NORMALIZATIONS:
            raise IngestError(f"normalization must be one of {NORMALIZATIONS}")
        if self.horizon_days < 0:
            raise IngestError("horizon_days must be >= 0")
        if self.stride is not None and self.stride < 1:
            raise IngestError("stride must be >= 1")

    @property
    def paths(self) -> list[Path]:
        return [Path(p) for p in self.path] if isinstance(self.path, tuple) else [Path(self.path)]


@dataclasses.dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_json(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_json(cls, doc: dict) -> "NormStats":
        return cls(np.array(doc["mean"], dtype=np.float64), np.array(doc["std"], dtype=np.float64))

    def apply(self, ds: PhaseDataset) -> PhaseDataset:
        return PhaseDataset(ds.phase, [
            dataclasses.replace(r, window=_frozen((r.window - self.mean) / self.std)) for r in ds.records
        ])


@dataclasses.dataclass
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    records_skipped: int = 0
    skipped: list[tuple[str, str]] = dataclasses.field(default_factory=list)
    phase_edges: list[tuple[str, str]] = dataclasses.field(default_factory=list)


@dataclasses.dataclass
class IngestResult:
    phases: list[PhaseDataset]
    report: IngestReport
    stats: NormStats | None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def normalize_stats(phase1: PhaseDataset) -> NormStats:
    """Per-channel mean and population std over every timestep of every window."""
    if len(phase1) == 0:
        raise IngestError("cannot compute normalisation statistics on an empty phase")
    flat = phase1.X.reshape(-1, phase1.shape[1])
    return NormStats(flat.mean(axis=0), np.maximum(flat.std(axis=0), STD_FLOOR))


def _read_frame(cfg: IngestConfig) -> pd.DataFrame:
    frames = []
    for p in cfg.paths:
        if not p.exists():
            raise IngestError(f"no such file: {p}")
        frames.append(pd.read_csv(p, dtype=str, keep_default_na=False, encoding="utf-8"))
    df = pd.concat(frames, ignore_index=True)
    needed = [cfg.id_column, cfg.date_column, cfg.label_column, *cfg.feature_columns]
    for col in needed:
        if col not in df.columns:
            raise IngestError(f"missing column {col!r}")
    return df[needed]


def _floats(col: pd.Series) -> np.ndarray:
    """Exact decimal-to-double parse; unparseable cells become NaN."""
    raw = col.to_numpy(dtype=object)
    try:
        return raw.astype(np.float64)
    except ValueError:
        out = np.empty(raw.size)
        for i, v in enumerate(raw):
            try:
                out[i] = float(v)
            except ValueError:
                out[i] = np.nan
        return out


def phase_index(days: np.ndarray, n_days: int, K: int) -> np.ndarray:
    """1-based phase of each day offset in ``[0, n_days)``."""
    return (days * K) // n_days + 1


def read_csv(cfg: IngestConfig) -> IngestResult:
    report = IngestReport()
    df = _read_frame(cfg)
    report.rows_read = len(df)

    dates = pd.to_datetime(df[cfg.date_column], format="%Y-%m-%d", errors="coerce")
    labels = pd.Series(_floats(df[cfg.label_column]), index=df.index)
    feats = np.column_stack([_floats(df[c]) for c in cfg.feature_columns])
    ok = dates.notna() & labels.isin([0, 1]) & np.isfinite(feats).all(axis=1)
    ok &= df[cfg.id_column].str.len() > 0
    report.rows_dropped = int((~ok).sum())

    clean = pd.DataFrame({
        "id": df[cfg.id_column][ok].to_numpy(),
        "date": dates[ok].to_numpy(),
        "label": labels[ok].astype(np.int8).to_numpy(),
    })
    values = feats[ok.to_numpy()]
    if clean.empty:
        raise IngestError("no parseable rows")
    clean["row"] = np.arange(len(clean))
    clean = clean.sort_values(["id", "date"], kind="mergesort").drop_duplicates(["id", "date"], keep="last")

    start = clean["date"].min()
    n_days = int((clean["date"].max() - start).days) + 1
    K = cfg.phases
    if n_days < K:
        raise IngestError(f"date range of {n_days} days cannot be split into {K} phases")
    days = (clean["date"] - start).dt.days.to_numpy()
    clean["phase"] = phase_index(days, n_days, K)
    for k in range(1, K + 1):
        in_k = days[clean["phase"].to_numpy() == k]
        lo = start + pd.Timedelta(days=int(in_k.min())) if in_k.size else None
        hi = start + pd.Timedelta(days=int(in_k.max())) if in_k.size else None
        report.phase_edges.append((str(lo.date()) if lo is not None else "", str(hi.date()) if hi is not None else ""))

    l = cfg.window_length
    horizon = np.timedelta64(cfg.horizon_days, "D")
    buckets: dict[int, list[LabeledRecord]] = {k: [] for k in range(1, K + 1)}
    for ident, g in clean.groupby("id", sort=True):
        g_dates = g["date"].to_numpy()
        g_labels = g["label"].to_numpy()
        g_phase = g["phase"].to_numpy()
        g_vals = values[g["row"].to_numpy()]
        for k in range(1, K + 1):
            pos = np.flatnonzero(g_phase == k)
            if pos.size == 0:
                continue
            ends = [pos[-1]] if cfg.stride is None else list(pos[::-1][:: cfg.stride][::-1])
            for end in ends:
                end_date = g_dates[end]
                rid = str(ident) if cfg.stride is None else f"{ident}@{pd.Timestamp(end_date).date()}"
                if end + 1 < l:
                    report.records_skipped += 1
                    report.skipped.append((rid, str(pd.Timestamp(end_date).date())))
                    continue
                first = end + 1 - l
                lo = g_dates[first]
                hit = (g_dates >= lo) & (g_dates <= end_date + horizon)
                label = int(g_labels[hit].max())
                buckets[k].append(LabeledRecord.create(rid, k, g_vals[first : end + 1], label))

    empty = [k for k, recs in buckets.items() if not recs]
    if empty:
        raise IngestError(f"phases {empty} produced no records")
    phases = [PhaseDataset(k, sorted(buckets[k], key=lambda r: r.id)) for k in range(1, K + 1)]

    stats = None
    if cfg.normalization == "zscore_per_channel":
        stats = normalize_stats(phases[0])
        phases = [stats.apply(ds) for ds in phases]
    return IngestResult(phases, report, stats)


def load_csv(cfg: IngestConfig) -> list[PhaseDataset]:
    return read_csv(cfg).phases


def save_stats(path: "str | Path", stats: NormStats) -> None:
    Path(path).write_text(json.dumps(stats.to_json()) + "\n")


def load_stats(path: "str | Path") -> NormStats:
    return NormStats.from_json(json.loads(Path(path).read_text()))


def columns_of(path: "str | Path") -> Sequence[str]:
    return list(pd.read_csv(path, nrows=0).columns)
