"""Benchmark grids, result tables and the class-prior sweep."""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Sequence

from .core import PhaseDataset
from .datagen import GeneratorConfig, generate_fleet
from .ingest import IngestConfig, load_csv
from .model import Arch, TrainConfig
from .simulate import SimulationRun, Strategy, initial_fit, run

BENCHMARK_STRATEGIES = ("offline", "certain", "naive", "uptake")
BENCHMARK_ARCHS = ("linear", "mlp:16")
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)
BENCHMARK_TRAIN = TrainConfig(learning_rate=1.0, epochs=40, batch_size=64, decision_threshold=0.3)
UPTAKE_DEFAULT = Strategy("uptake", certain_full_weight=True)


def default_strategy(spec) -> Strategy:
    """Benchmark strategy names; bare ``uptake`` means the full-weight reading, ``uptake:literal`` the other."""
    if isinstance(spec, Strategy):
        return spec
    s = str(spec).strip().lower()
    if s == "uptake":
        return UPTAKE_DEFAULT
    if s == "uptake:literal":
        return Strategy("uptake")
    return Strategy.parse(s)


def strategy_label(strategy: Strategy) -> str:
    if strategy.kind == "uptake":
        return "uptake" if strategy.certain_full_weight else "uptake:literal"
    return str(strategy)


def threads_from_env() -> int:
    """Worker count from ``UPLEARN_THREADS``; defaults to the number of cores."""
    raw = os.environ.get("UPLEARN_THREADS", "").strip()
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


class CellError(RuntimeError):
    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"{cell}: {type(cause).__name__}: {cause}")
        self.cell = cell


@functools.lru_cache(maxsize=4)
def _ingested(source: IngestConfig) -> tuple[PhaseDataset, ...]:
    return tuple(load_csv(source))


def load_phases(source: "GeneratorConfig | IngestConfig", seed: int) -> list[PhaseDataset]:
    """The fleet for ``seed``; ingested data ignores the seed."""
    if isinstance(source, GeneratorConfig):
        return generate_fleet(dataclasses.replace(source, seed=seed))
    return list(_ingested(source))


@dataclasses.dataclass(frozen=True)
class Cell:
    """One ``(seed, arch)`` unit; its strategies share the phase-1 fit."""

    source: "GeneratorConfig | IngestConfig"
    train: TrainConfig
    seed: int
    arch: str
    strategies: tuple[str, ...]
    pi_p: float | None = None

    @property
    def name(self) -> str:
        return f"seed={self.seed} arch={self.arch} strategies={','.join(self.strategies)}"


def run_cell(cell: Cell) -> list[tuple[dict, dict]]:
    """``(run document, timings document)`` for each strategy of ``cell``."""
    try:
        phases = load_phases(cell.source, cell.seed)
        train = dataclasses.replace(cell.train, seed=cell.seed)
        init = initial_fit(phases, cell.arch, train)
        out = []
        for s in cell.strategies:
            strategy = default_strategy(s)
            sim = run(phases, strategy, cell.arch, train, initial=init,
                      pi_p=cell.pi_p if strategy.kind == "uptake" else None)
            label = strategy_label(sim.strategy)
            timing = {"strategy": label, "arch": str(sim.arch), "seed": sim.seed, **sim.timings_json()}
            out.append((sim.to_json(timings=False), timing))
        return out
    except Exception as exc:
        raise CellError(cell.name, exc) from exc


def make_cells(source, train: TrainConfig, seeds: Iterable[int], archs: Iterable[str], strategies: Iterable[str],
               pi_p: float | None = None) -> list[Cell]:
    strategies = tuple(strategies)
    return [Cell(source, train, int(s), str(Arch.parse(a)), strategies, pi_p) for s in seeds for a in archs]


def map_cells(fn, cells: Sequence, workers: int | None = None):
    """Results of ``fn`` over ``cells`` in input order, lazily."""
    workers = threads_from_env() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as ex:
            yield from ex.map(fn, cells)
    else:
        for c in cells:
            yield fn(c)


def run_grid(
    gen: "GeneratorConfig | IngestConfig",
    train: TrainConfig = BENCHMARK_TRAIN,
    *,
    seeds: Iterable[int] = BENCHMARK_SEEDS,
    archs: Iterable[str] = BENCHMARK_ARCHS,
    strategies: Iterable[str] = BENCHMARK_STRATEGIES,
    pi_p: float | None = None,
    workers: int | None = None,
) -> list[tuple[dict, dict]]:
    """Every ``seed x arch x strategy`` simulation; each seed drives both the fleet and training.

    Returns ``(run document, timings document)`` pairs in a fixed order, independent of ``workers``.
    """
    cells = make_cells(gen, train, seeds, archs, strategies, pi_p)
    return [pair for result in map_cells(run_cell, cells, workers) for pair in result]


@dataclasses.dataclass(frozen=True)
class Row:
    arch: str
    strategy: str
    phases: tuple[int, ...]
    precision: tuple[float | None, ...]
    recall: tuple[float | None, ...]
    f1: tuple[float | None, ...]
    avg_f1: float | None
    n_runs: int
    skipped: int


@dataclasses.dataclass(frozen=True)
class Aggregate:
    first_phase: int
    phases: tuple[int, ...]
    rows: tuple[Row, ...]
    cross_model: dict[str, tuple[tuple[float | None, ...], float | None]]
    series: dict[str, tuple[tuple[int, float | None], ...]]

    def row(self, arch: str, strategy: str) -> Row:
        for r in self.rows:
            if r.arch == arch and r.strategy == strategy:
                return r
        raise KeyError((arch, strategy))


def _mean(values: Sequence[float | None]) -> tuple[float | None, int]:
    """Order-independent mean of the defined values, and how many were undefined."""
    vals = sorted(v for v in values if v is not None)
    return (math.fsum(vals) / len(vals) if vals else None), len(values) - len(vals)


def _as_doc(run_or_doc) -> dict:
    return run_or_doc.to_json(timings=False) if isinstance(run_or_doc, SimulationRun) else run_or_doc


def _label_of(doc: dict) -> str:
    s = doc["strategy"]
    return strategy_label(Strategy(s["kind"], s.get("certain_full_weight", False), s.get("history")))


def _arch_of(doc: dict) -> str:
    return str(Arch(doc["arch"]["kind"], doc["arch"].get("hidden")))


def aggregate(runs: Sequence, first_phase: int = 2) -> Aggregate:
    """Per-model and cross-model tables of mean P/R/F1 per phase.

    Runs sharing ``(arch, strategy)`` are averaged (seeds).  The average column
    spans phases ``first_phase..K``; undefined values are skipped and counted.
    Results do not depend on the order of ``runs``.
    """
    docs = [_as_doc(r) for r in runs]
    if not docs:
        raise ValueError("no runs to aggregate")
    counts = {tuple(sorted(r["phase"] for r in d["phase_reports"])) for d in docs}
    if len(counts) != 1:
        raise ValueError(f"runs cover different phases: {sorted(counts)}")
    phases = counts.pop()
    if first_phase not in phases:
        raise ValueError(f"first_phase {first_phase} not among phases {phases}")

    groups: dict[tuple[str, str], list[dict]] = {}
    for d in docs:
        groups.setdefault((_arch_of(d), _label_of(d)), []).append(d)

    rows = []
    for (arch, strategy) in sorted(groups):
        members = groups[(arch, strategy)]
        by_phase = [[next(r for r in d["phase_reports"] if r["phase"] == k) for d in members] for k in phases]
        P = tuple(_mean([r["precision"] for r in rs])[0] for rs in by_phase)
        R = tuple(_mean([r["recall"] for r in rs])[0] for rs in by_phase)
        F = tuple(_mean([r["f1"] for r in rs])[0] for rs in by_phase)
        avg, _ = _mean([f for k, f in zip(phases, F) if k >= first_phase])
        skipped = sum(1 for k, rs in zip(phases, by_phase) if k >= first_phase for r in rs if r["f1"] is None)
        rows.append(Row(arch, strategy, phases, P, R, F, avg, len(members), skipped))

    cross = {}
    series = {}
    for strategy in sorted({r.strategy for r in rows}):
        mine = [r for r in rows if r.strategy == strategy]
        per_phase = tuple(_mean([r.f1[i] for r in mine])[0] for i in range(len(phases)))
        avg, _ = _mean([f for k, f in zip(phases, per_phase) if k >= first_phase])
        cross[strategy] = (per_phase, avg)
        series[strategy] = tuple(zip(phases, per_phase))
    return Aggregate(first_phase, phases, tuple(rows), cross, series)


def _pct(v: float | None) -> str:
    return "undef" if v is None else f"{100.0 * v:6.2f}"


def render_text(agg: Aggregate) -> str:
    span = f"avg T{agg.first_phase}-T{agg.phases[-1]}"
    head = ["model", "strategy", *(f"T{k}" for k in agg.phases), span]
    body = [[r.arch, r.strategy, *(_pct(f) for f in r.f1), _pct(r.avg_f1)] for r in agg.rows]
    body += [["all", s, *(_pct(f) for f in per), _pct(avg)] for s, (per, avg) in agg.cross_model.items()]
    widths = [max(len(str(row[i])) for row in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(str(c).rjust(w) if i > 1 else str(c).ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [head, *body]]
    lines.insert(1, "-" * len(lines[0]))
    skipped = sum(r.skipped for r in agg.rows)
    if skipped:
        lines.append(f"({skipped} undefined F1 values excluded from means)")
    return "\n".join(lines) + "\n"


def _num(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def render_csv(agg: Aggregate) -> str:
    """One row per model x strategy x phase."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "strategy", "phase", "precision", "recall", "f1", "n_runs"])
    for r in agg.rows:
        for i, k in enumerate(r.phases):
            w.writerow([r.arch, r.strategy, k, _num(r.precision[i]), _num(r.recall[i]), _num(r.f1[i]), r.n_runs])
    for s, (per, _) in agg.cross_model.items():
        for k, f in zip(agg.phases, per):
            w.writerow(["all", s, k, "", "", _num(f), ""])
    return buf.getvalue()


def render_series(agg: Aggregate, strategy: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "f1"])
    for k, f in agg.series[strategy]:
        w.writerow([k, _num(f)])
    return buf.getvalue()


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` inclusive of both ends, or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {spec!r} must look like start:stop:step")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"grid {spec!r} needs step > 0 and stop >= start")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [round(lo + i * step, 12) for i in range(n)]
    else:
        values = [float(p) for p in spec.split(",") if p.strip()]
    if not values:
        raise ValueError("empty pi_p grid")
    bad = [v for v in values if not 0.0 <= v <= 1.0]
    if bad:
        raise ValueError(f"pi_p values outside [0, 1]: {bad}")
    return values


@dataclasses.dataclass(frozen=True)
class Sweep:
    grid: tuple[float, ...]
    f1: tuple[float | None, ...]
    auto_pi_p: float
    auto_f1: float | None
    first_phase: int

    @property
    def best(self) -> tuple[float, float]:
        pairs = [(f, -i) for i, f in enumerate(self.f1) if f is not None]
        if not pairs:
            raise ValueError("no defined F1 in sweep")
        f, neg_i = max(pairs)
        return self.grid[-neg_i], f

    def to_json(self) -> dict:
        return {
            "grid": list(self.grid),
            "f1": list(self.f1),
            "auto_pi_p": self.auto_pi_p,
            "auto_f1": self.auto_f1,
            "first_phase": self.first_phase,
        }


def sweep_pi_p(
    phases: Sequence[PhaseDataset],
    arch,
    cfg: TrainConfig,
    grid: Sequence[float],
    *,
    strategy=UPTAKE_DEFAULT,
    first_phase: int = 2,
    initial=None,
) -> Sweep:
    """Mean F1 over phases ``first_phase..K`` for each fixed class prior, plus the estimated one.

    The phase-1 fit is shared by every grid point.
    """
    grid = tuple(float(v) for v in grid)
    if not grid:
        raise ValueError("empty pi_p grid")
    strategy = default_strategy(strategy)
    if strategy.kind != "uptake":
        raise ValueError("the sweep varies the uptake class prior")
    init = initial if initial is not None else initial_fit(phases, arch, cfg)
    scores = tuple(run(phases, strategy, arch, cfg, initial=init, pi_p=v).mean_f1(first_phase) for v in grid)
    auto = run(phases, strategy, arch, cfg, initial=init)
    return Sweep(grid, scores, auto.pi_p_estimate, auto.mean_f1(first_phase), first_phase)


def _sweep_cell(args) -> Sweep:
    cell, grid, first_phase = args
    phases = load_phases(cell.source, cell.seed)
    cfg = dataclasses.replace(cell.train, seed=cell.seed)
    return sweep_pi_p(phases, cell.arch, cfg, grid, strategy=cell.strategies[0], first_phase=first_phase)


def sweep_grid(
    gen: "GeneratorConfig | IngestConfig",
    train: TrainConfig = BENCHMARK_TRAIN,
    grid: Sequence[float] = tuple(parse_grid("0:1:0.1")),
    *,
    seeds: Iterable[int] = BENCHMARK_SEEDS,
    archs: Iterable[str] = BENCHMARK_ARCHS,
    strategy: str = "uptake",
    first_phase: int = 2,
    workers: int | None = None,
) -> Sweep:
    """:func:`sweep_pi_p` averaged over seeds and architectures."""
    grid = tuple(grid)
    if not grid:
        raise ValueError("empty pi_p grid")
    cells = make_cells(gen, train, seeds, archs, (strategy,))
    parts = list(map_cells(_sweep_cell, [(c, grid, first_phase) for c in cells], workers))
    f1 = tuple(_mean([p.f1[i] for p in parts])[0] for i in range(len(grid)))
    auto_pi, _ = _mean([p.auto_pi_p for p in parts])
    auto_f1, _ = _mean([p.auto_f1 for p in parts])
    return Sweep(grid, f1, auto_pi, auto_f1, first_phase)


def degradation(agg: Aggregate, strategy: str) -> tuple[float | None, float | None]:
    """Cross-model F1 at the first and last scored phase."""
    s = agg.series[strategy]
    return s[0][1], s[-1][1]


def timing_ratio(timings: Sequence[dict], phase: int, numerator: str, denominator: str) -> list[tuple[str, int, float]]:
    """``(arch, seed, ratio)`` of seconds/epoch at boundary ``phase`` between two strategies."""
    index = {(t["strategy"], t["arch"], t["seed"]): t for t in timings}
    out = []
    for (s, arch, seed), t in sorted(index.items()):
        other = index.get((denominator, arch, seed))
        if s != numerator or other is None:
            continue
        out.append((arch, seed, t["boundaries"][str(phase)] / other["boundaries"][str(phase)]))
    return out
