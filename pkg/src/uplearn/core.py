"""Domain types and label bookkeeping.

Labels are mapped once here: Positive <-> 1, Negative <-> 0.

Oracle labels are readable through :attr:`LabeledRecord.oracle`, and every
read is charged to whichever accessor is active (see :func:`oracle_access`).
The simulator opens a named scope around each code path, so a strategy that
peeks at ground truth after phase 1 shows up as a nonzero audit count.
"""
from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import enum
from collections import Counter
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np


class LabelError(ValueError):
    """Raised when a record's observed label is missing or inconsistent."""


class Oracle(enum.IntEnum):
    NEGATIVE = 0
    POSITIVE = 1


class Observed(str, enum.Enum):
    CERTAIN_POSITIVE = "certain_positive"
    CERTAIN_NEGATIVE = "certain_negative"
    UNCERTAIN_POSITIVE = "uncertain_positive"
    HIDDEN = "hidden"

    @property
    def is_certain(self) -> bool:
        return self in (Observed.CERTAIN_POSITIVE, Observed.CERTAIN_NEGATIVE)

    @classmethod
    def certain(cls, label: int) -> "Observed":
        return cls.CERTAIN_POSITIVE if int(label) == 1 else cls.CERTAIN_NEGATIVE


class OracleAudit:
    """Counts oracle-label reads per (accessor, phase)."""

    def __init__(self) -> None:
        self.counts: Counter[tuple[str, int]] = Counter()

    def record(self, accessor: str, phase: int, n: int = 1) -> None:
        self.counts[(accessor, phase)] += n

    def reads(self, accessors: Iterable[str] | None = None, min_phase: int = 1) -> int:
        names = None if accessors is None else set(accessors)
        return sum(
            n
            for (who, phase), n in self.counts.items()
            if phase >= min_phase and (names is None or who in names)
        )

    def accessors(self, min_phase: int = 1) -> set[str]:
        return {who for (who, phase), n in self.counts.items() if phase >= min_phase and n}

    def as_dict(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for (who, phase), n in sorted(self.counts.items()):
            out.setdefault(who, {})[str(phase)] = n
        return out


GLOBAL_AUDIT = OracleAudit()
_reader: contextvars.ContextVar[tuple[str, OracleAudit]] = contextvars.ContextVar(
    "uplearn_oracle_reader", default=("unscoped", GLOBAL_AUDIT)
)


@contextlib.contextmanager
def oracle_access(accessor: str, audit: OracleAudit | None = None) -> Iterator[OracleAudit]:
    """Charge oracle reads inside the block to ``accessor``.

    If ``audit`` is None the audit of the enclosing scope is reused.
    """
    if audit is None:
        audit = _reader.get()[1]
    token = _reader.set((accessor, audit))
    try:
        yield audit
    finally:
        _reader.reset(token)


def as_window(values) -> np.ndarray:
    """Validate and freeze an ``(l, d)`` feature window."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"feature window must be a non-empty (l, d) matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature window contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class LabeledRecord:
    id: str
    phase: int
    window: np.ndarray
    _oracle: Oracle = dataclasses.field(repr=False)
    observed: Observed = Observed.HIDDEN

    @classmethod
    def create(cls, id: str, phase: int, window, oracle: int, observed: Observed = Observed.HIDDEN):
        return cls(str(id), int(phase), as_window(window), Oracle(int(oracle)), Observed(observed))

    @property
    def oracle(self) -> Oracle:
        who, audit = _reader.get()
        audit.record(who, self.phase)
        return self._oracle

    def with_observed(self, observed: Observed) -> "LabeledRecord":
        return dataclasses.replace(self, observed=Observed(observed))


@dataclasses.dataclass(frozen=True, eq=False)
class PhaseDataset:
    phase: int
    records: tuple[LabeledRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        shapes = {r.window.shape for r in self.records}
        if len(shapes) > 1:
            raise ValueError(f"phase {self.phase}: inconsistent window shapes {sorted(shapes)}")
        bad = [r.id for r in self.records if r.phase != self.phase]
        if bad:
            raise ValueError(f"phase {self.phase}: records from another phase: {bad[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def shape(self) -> tuple[int, int]:
        return self.records[0].window.shape

    @cached_property
    def positive_count(self) -> int:
        # bookkeeping metadata, deliberately not charged to the audit
        return sum(int(r._oracle) for r in self.records)

    @property
    def negative_count(self) -> int:
        return len(self.records) - self.positive_count

    @property
    def imbalance_rate(self) -> float:
        """#Positive / #Negative over oracle labels."""
        neg = self.negative_count
        return float("inf") if neg == 0 else self.positive_count / neg

    @cached_property
    def X(self) -> np.ndarray:
        return stack_windows(self.records)


@dataclasses.dataclass(frozen=True)
class ClassPrior:
    pi_p: float

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.pi_p) <= 1.0:
            raise ValueError(f"pi_p must lie in [0, 1], got {self.pi_p}")
        object.__setattr__(self, "pi_p", float(self.pi_p))

    @property
    def pi_n(self) -> float:
        return 1.0 - self.pi_p


def stack_windows(records: Sequence[LabeledRecord]) -> np.ndarray:
    if not records:
        raise ValueError("no records to stack")
    return np.stack([r.window for r in records])


def partition_by_observed(records: Iterable[LabeledRecord]):
    """Split records into (certain positives, certain negatives, uncertain positives)."""
    X_p: list[LabeledRecord] = []
    X_n: list[LabeledRecord] = []
    X_u: list[LabeledRecord] = []
    for r in records:
        if r.observed is Observed.CERTAIN_POSITIVE:
            X_p.append(r)
        elif r.observed is Observed.CERTAIN_NEGATIVE:
            X_n.append(r)
        elif r.observed is Observed.UNCERTAIN_POSITIVE:
            X_u.append(r)
        else:
            raise LabelError(f"unassigned label on record {r.id!r}")
    return X_p, X_n, X_u
