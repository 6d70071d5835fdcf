"""Phased online updating under mitigation-induced label hiding.

Phase 1 is trained on oracle labels.  In every later phase the current model is
deployed: predicted positives are mitigated and become uncertain positives,
everything else eventually reveals its true outcome.  At each phase boundary
the strategy rebuilds its training pool and the model is refit from scratch.

Oracle reads are charged to named accessors:

* ``t1_labels``   -- labelling of the fully observed first phase
* ``environment`` -- outcomes revealed for predicted-negative records
* ``evaluator``   -- per-phase scoring against ground truth
* ``offline``     -- the Offline strategy's pool
* ``naive`` / ``certain`` / ``uptake`` -- strategy code paths; must stay at zero
  for phases >= 2
"""
from __future__ import annotations

import dataclasses
import logging
from typing import Sequence

import numpy as np

from .core import (
    ClassPrior,
    LabeledRecord,
    Observed,
    OracleAudit,
    PhaseDataset,
    oracle_access,
    partition_by_observed,
)
from .metrics import Confusion, metrics, precision
from .model import Arch, ModelState, TrainConfig, checkpoint_dict, predict_batch
from .risk import naive_loss, standard_loss, uptake_loss
from .train import SelectionError, TrainResult, evaluate, fit, split_validation

log = logging.getLogger(__name__)

STRATEGY_KINDS = ("offline", "certain", "naive", "uptake")
ALLOWED_ORACLE_READERS = frozenset({"evaluator", "offline", "environment"})
DEFAULT_PI_P = 0.5


@dataclasses.dataclass(frozen=True)
class Strategy:
    kind: str
    certain_full_weight: bool = False
    history: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.certain_full_weight and self.kind != "uptake":
            raise ValueError("certain_full_weight only applies to the uptake strategy")
        if self.history is not None and self.history < 1:
            raise ValueError("history must be >= 1 phases")

    @classmethod
    def parse(cls, spec: "str | Strategy") -> "Strategy":
        """``offline``, ``certain``, ``naive``, ``uptake`` or ``uptake:full``."""
        if isinstance(spec, Strategy):
            return spec
        kind, _, opt = str(spec).strip().lower().partition(":")
        if opt and opt not in ("full", "certain_full_weight"):
            raise ValueError(f"unknown strategy option {opt!r}")
        return cls(kind, certain_full_weight=bool(opt))

    @property
    def window(self) -> int | None:
        """Number of most recent phases pooled; None means everything so far."""
        if self.history is not None:
            return self.history
        return None if self.kind == "certain" else 1

    def __str__(self) -> str:
        return f"{self.kind}:full" if self.certain_full_weight else self.kind

    def to_json(self) -> dict:
        return {"kind": self.kind, "certain_full_weight": self.certain_full_weight, "history": self.history, "window": self.window}


@dataclasses.dataclass(frozen=True)
class PhaseReport:
    phase: int
    strategy: str
    arch: str
    precision: float | None
    recall: float | None
    f1: float | None
    confusion: Confusion
    seconds_per_epoch: float
    seed: int = 0

    def to_json(self, timings: bool = True) -> dict:
        doc = {
            "phase": self.phase,
            "strategy": self.strategy,
            "arch": self.arch,
            "seed": self.seed,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion.to_json(),
        }
        if timings:
            doc["seconds_per_epoch"] = self.seconds_per_epoch
        return doc


@dataclasses.dataclass(frozen=True)
class Boundary:
    """Refit performed after observing ``phase``; the model serves ``phase + 1``."""

    phase: int
    pool_size: int
    n_certain_pos: int
    n_certain_neg: int
    n_uncertain: int
    refit: bool
    best_epoch: int | None
    val_f1: float | None
    seconds_per_epoch: float
    pi_p: float | None = None

    def to_json(self, timings: bool = True) -> dict:
        doc = dataclasses.asdict(self)
        if not timings:
            doc.pop("seconds_per_epoch")
        return doc


@dataclasses.dataclass(eq=False)
class SimulationRun:
    strategy: Strategy
    arch: Arch
    train_cfg: TrainConfig
    seed: int
    pi_p_estimate: float
    pi_p_source: str
    phase_reports: list[PhaseReport]
    boundaries: list[Boundary]
    audit: OracleAudit
    initial_epoch_seconds: float
    models: list[ModelState] = dataclasses.field(default_factory=list, repr=False)
    pools: dict[int, tuple[list, list, list]] = dataclasses.field(default_factory=dict, repr=False)
    observed: dict[int, list[LabeledRecord]] = dataclasses.field(default_factory=dict, repr=False)

    @property
    def key(self) -> str:
        return f"{self.strategy}__{self.arch}__seed{self.seed}".replace(":", "-")

    def mean_f1(self, first_phase: int = 2) -> float | None:
        vals = [r.f1 for r in self.phase_reports if r.phase >= first_phase and r.f1 is not None]
        return sum(vals) / len(vals) if vals else None

    def report(self, phase: int) -> PhaseReport:
        for r in self.phase_reports:
            if r.phase == phase:
                return r
        raise KeyError(phase)

    def to_json(self, timings: bool = False, extra: dict | None = None) -> dict:
        """JSON document; wall-clock fields only when ``timings`` is set."""
        doc = {
            "strategy": self.strategy.to_json(),
            "arch": self.arch.to_json(),
            "seed": self.seed,
            "train": dataclasses.asdict(self.train_cfg),
            "pi_p_estimate": self.pi_p_estimate,
            "pi_p_source": self.pi_p_source,
            "phase_reports": [r.to_json(timings) for r in self.phase_reports],
            "boundaries": [b.to_json(timings) for b in self.boundaries],
            "audit": self.audit.as_dict(),
        }
        if timings:
            doc["initial_seconds_per_epoch"] = self.initial_epoch_seconds
        if extra:
            doc.update(extra)
        return doc

    def timings_json(self) -> dict:
        return {
            "key": self.key,
            "initial_seconds_per_epoch": self.initial_epoch_seconds,
            "phases": {str(r.phase): r.seconds_per_epoch for r in self.phase_reports},
            "boundaries": {str(b.phase): b.seconds_per_epoch for b in self.boundaries},
        }


def estimate_pi_p(val_confusion: Confusion | tuple) -> float:
    """Validation precision ``TP / (TP + FP)`` of the phase-1 model."""
    c = val_confusion if isinstance(val_confusion, Confusion) else Confusion(*val_confusion)
    p = precision(c)
    if p is None:
        raise ValueError("no positive predictions; pi_p undefined")
    return p


def fit_seed(seed: int, phase: int) -> int:
    return int(np.random.SeedSequence([seed, phase]).generate_state(1)[0])


def deploy(model: ModelState, phase: PhaseDataset, threshold: float, audit: OracleAudit):
    """Predict on ``phase``; mitigate positives, reveal the rest.

    Returns ``(observed records, predictions)``.
    """
    preds = predict_batch(model, phase.X, threshold)
    observed = []
    with oracle_access("environment", audit):
        for r, yhat in zip(phase.records, preds):
            if yhat:
                observed.append(r.with_observed(Observed.UNCERTAIN_POSITIVE))
            else:
                observed.append(r.with_observed(Observed.certain(r.oracle)))
    n_u = int(preds.sum())
    n_c = sum(1 for r in observed if r.observed.is_certain)
    assert n_u + n_c == len(phase), "label conservation violated"
    return observed, preds


def score_phase(phase: PhaseDataset, preds: np.ndarray, audit: OracleAudit) -> Confusion:
    with oracle_access("evaluator", audit):
        y = np.array([int(r.oracle) for r in phase.records], dtype=np.int8)
    return Confusion.from_labels(y, preds)


def _pool(strategy: Strategy, history: dict[int, list[LabeledRecord]], k: int, phases: Sequence[PhaseDataset], audit: OracleAudit):
    window = strategy.window
    first = 1 if window is None else max(1, k - window + 1)
    if strategy.kind == "offline":
        out = []
        with oracle_access("offline", audit):
            for j in range(first, k + 1):
                out.extend(r.with_observed(Observed.certain(r.oracle)) for r in phases[j - 1].records)
        return out
    out = []
    for j in range(first, k + 1):
        recs = history[j]
        if strategy.kind == "certain":
            recs = [r for r in recs if r.observed.is_certain]
        out.extend(recs)
    return out


def _builder(strategy: Strategy, prior: ClassPrior):
    if strategy.kind in ("offline", "certain"):
        def build(records):
            X_p, X_n, _ = partition_by_observed(records)
            return standard_loss(X_p, X_n)
    elif strategy.kind == "naive":
        def build(records):
            return naive_loss(*partition_by_observed(records))
    else:
        def build(records):
            X_p, X_n, X_u = partition_by_observed(records)
            return uptake_loss(X_p, X_n, X_u, prior, certain_full_weight=strategy.certain_full_weight)
    return build


def _fit_pool(arch, strategy: Strategy, pool, prior: ClassPrior, cfg: TrainConfig, seed: int) -> TrainResult:
    train, val = split_validation(pool, cfg.val_fraction, seed)
    return fit(arch, _builder(strategy, prior), train, val, dataclasses.replace(cfg, seed=seed))


def initial_fit(phases: Sequence[PhaseDataset], arch, cfg: TrainConfig, audit: OracleAudit | None = None):
    """Label phase 1 from the oracle and train the first deployed model."""
    audit = audit if audit is not None else OracleAudit()
    with oracle_access("t1_labels", audit):
        t1 = [r.with_observed(Observed.certain(r.oracle)) for r in phases[0].records]
    seed = fit_seed(cfg.seed, 1)
    res = _fit_pool(arch, Strategy("offline"), t1, ClassPrior(0.5), cfg, seed)
    return t1, res


def run(
    phases: Sequence[PhaseDataset],
    strategy,
    arch,
    cfg: TrainConfig,
    *,
    pi_p: float | None = None,
    initial_model: ModelState | None = None,
    initial: tuple | None = None,
    reestimate_pi_p: bool = False,
    keep_pools: bool = False,
) -> SimulationRun:
    """Simulate ``len(phases)`` phases of deploy / mitigate / retrain.

    ``pi_p`` overrides the estimate taken from phase-1 validation precision.
    ``initial_model`` skips phase-1 training (pi_p is then its precision on phase 1).
    ``initial`` reuses a precomputed :func:`initial_fit` result.
    """
    strategy = Strategy.parse(strategy)
    arch = Arch.parse(arch)
    if len(phases) < 2:
        raise ValueError("need at least 2 phases")
    shapes = {ds.shape for ds in phases}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent window shapes across phases: {sorted(shapes)}")
    thr = cfg.decision_threshold
    audit = OracleAudit()

    if initial_model is not None:
        with oracle_access("t1_labels", audit):
            t1 = [r.with_observed(Observed.certain(r.oracle)) for r in phases[0].records]
        y1 = np.array([1 if r.observed is Observed.CERTAIN_POSITIVE else 0 for r in t1], dtype=np.int8)
        model = initial_model
        val_conf = evaluate(model, phases[0].X, y1, thr)
        init_seconds = 0.0
    else:
        if initial is None:
            t1, res = initial_fit(phases, arch, cfg, audit)
        else:
            t1, res = initial
            audit.record("t1_labels", 1, len(phases[0]))
        model = res.model
        val_conf = res.val_confusion
        init_seconds = res.seconds_per_epoch

    if pi_p is not None:
        est, source = float(pi_p), "override"
    else:
        try:
            est, source = estimate_pi_p(val_conf), "estimated"
        except ValueError:
            log.warning("phase-1 model made no positive validation predictions; pi_p falls back to %s", DEFAULT_PI_P)
            est, source = DEFAULT_PI_P, "default"
    current_pi = est

    history: dict[int, list[LabeledRecord]] = {1: t1}
    reports: list[PhaseReport] = []
    boundaries: list[Boundary] = []
    models = [model]
    pools = {}
    seconds = init_seconds
    K = len(phases)
    for k in range(2, K + 1):
        ds = phases[k - 1]
        observed, preds = deploy(model, ds, thr, audit)
        conf = score_phase(ds, preds, audit)
        if conf.positives == 0:
            log.warning("phase %d has no oracle positives; F1 undefined", k)
        p, r, f = metrics(conf)
        reports.append(PhaseReport(k, str(strategy), str(arch), p, r, f, conf, seconds, cfg.seed))
        history[k] = observed
        if k == K:
            break

        with oracle_access(strategy.kind, audit):
            pool = _pool(strategy, history, k, phases, audit)
            X_p, X_n, X_u = partition_by_observed(pool)
            if keep_pools:
                pools[k] = (X_p, X_n, X_u)
            info = dict(phase=k, pool_size=len(pool), n_certain_pos=len(X_p), n_certain_neg=len(X_n), n_uncertain=len(X_u))
            try:
                res = _fit_pool(arch, strategy, pool, ClassPrior(current_pi), cfg, fit_seed(cfg.seed, k))
            except SelectionError as exc:
                log.warning("boundary %d (%s): %s; reusing previous model", k, strategy, exc)
                boundaries.append(Boundary(**info, refit=False, best_epoch=None, val_f1=None, seconds_per_epoch=seconds,
                                           pi_p=current_pi if strategy.kind == "uptake" else None))
                models.append(model)
                continue
        model = res.model
        seconds = res.seconds_per_epoch
        boundaries.append(Boundary(**info, refit=True, best_epoch=res.best_epoch, val_f1=res.val_f1_at_best,
                                   seconds_per_epoch=seconds, pi_p=current_pi if strategy.kind == "uptake" else None))
        models.append(model)
        if reestimate_pi_p and strategy.kind == "uptake" and pi_p is None:
            p_new = precision(res.val_confusion)
            if p_new is not None:
                current_pi = p_new

    return SimulationRun(
        strategy=strategy,
        arch=arch,
        train_cfg=cfg,
        seed=cfg.seed,
        pi_p_estimate=est,
        pi_p_source=source,
        phase_reports=reports,
        boundaries=boundaries,
        audit=audit,
        initial_epoch_seconds=init_seconds,
        models=models,
        pools=pools,
        observed=history if keep_pools else {},
    )


def run_from_json(doc: dict) -> SimulationRun:
    """Rebuild a run (reports, boundaries, audit) from its serialised form."""
    sd = doc["strategy"]
    strategy = Strategy(sd["kind"], sd.get("certain_full_weight", False), sd.get("history"))
    arch = Arch(doc["arch"]["kind"], doc["arch"].get("hidden"))
    audit = OracleAudit()
    for who, per_phase in doc.get("audit", {}).items():
        for phase, n in per_phase.items():
            audit.record(who, int(phase), n)
    reports = [
        PhaseReport(
            phase=r["phase"], strategy=r["strategy"], arch=r["arch"], precision=r["precision"], recall=r["recall"],
            f1=r["f1"], confusion=Confusion(**r["confusion"]), seconds_per_epoch=r.get("seconds_per_epoch", 0.0),
            seed=r.get("seed", doc.get("seed", 0)),
        )
        for r in doc["phase_reports"]
    ]
    boundaries = [Boundary(**{"seconds_per_epoch": 0.0, **b}) for b in doc.get("boundaries", [])]
    return SimulationRun(
        strategy=strategy,
        arch=arch,
        train_cfg=TrainConfig(**doc["train"]),
        seed=doc.get("seed", 0),
        pi_p_estimate=doc["pi_p_estimate"],
        pi_p_source=doc.get("pi_p_source", "estimated"),
        phase_reports=reports,
        boundaries=boundaries,
        audit=audit,
        initial_epoch_seconds=doc.get("initial_seconds_per_epoch", 0.0),
    )


def strategy_oracle_reads(sim: SimulationRun) -> int:
    """Oracle reads on phases >= 2 by anything other than the permitted accessors."""
    names = sim.audit.accessors(min_phase=2) - ALLOWED_ORACLE_READERS
    if sim.strategy.kind == "offline":
        names.discard("offline")
    return sim.audit.reads(names, min_phase=2)


def model_checkpoints(sim: SimulationRun) -> list[dict]:
    return [checkpoint_dict(m, sim.train_cfg.decision_threshold) for m in sim.models]
