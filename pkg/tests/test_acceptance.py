"""End-to-end acceptance checks on the seeded synthetic benchmark.

Each test records one PASS/FAIL line, printed in the pytest terminal summary
and echoed to stdout (visible with ``-s``).
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import central_differences, logit, max_relative_error, scalar_bce
from test_simulate import identity_model, miniature
from uplearn import cli
from uplearn.core import ClassPrior
from uplearn.datagen import GeneratorConfig
from uplearn.evaluate import BENCHMARK_TRAIN, aggregate, run_grid, sweep_grid, timing_ratio
from uplearn.metrics import Confusion, f1_score, metrics
from uplearn.model import ARCH_KINDS, Arch, ModelState, grad, init_model, loss
from uplearn.risk import standard_loss, uptake_loss
from uplearn.simulate import ALLOWED_ORACLE_READERS, run

SEEDS = range(5)
ARCHS = ("linear", "mlp:16")


def record(name, ok, detail):
    ACCEPTANCE[name] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def bench():
    """Every strategy x arch x seed run of the benchmark: (run docs, timing docs)."""
    pairs = run_grid(GeneratorConfig(), BENCHMARK_TRAIN, seeds=SEEDS, archs=ARCHS)
    return [d for d, _ in pairs], [t for _, t in pairs]


def _mean_f1(docs, strategy, seed, phases):
    vals = [r["f1"] for d in docs if d["seed"] == seed and _label(d) == strategy
            for r in d["phase_reports"] if r["phase"] in phases]
    return float(np.mean([0.0 if v is None else v for v in vals]))


def _label(doc):
    s = doc["strategy"]
    if s["kind"] == "uptake":
        return "uptake" if s["certain_full_weight"] else "uptake:literal"
    return s["kind"]


def test_1_metric_fidelity():
    p, r = 0.5784, 0.3333
    f = f1_score(p, r)
    # integer confusion with the same ratios
    c = Confusion(tp=3333, fp=round(3333 / p) - 3333, tn=0, fn=10000 - 3333)
    f_counts = metrics(c)[2]
    ok = abs(f - 0.4229) <= 2e-4 and abs(f_counts - 0.4229) <= 2e-4
    record("1 metric fidelity", ok, f"F1(0.5784, 0.3333) = {f:.5f}, from counts {f_counts:.5f}, target 0.4229 +- 0.0002")


def test_2_loss_reductions():
    ident = ModelState(Arch("linear"), [1.0, 0.0], (1, 1))
    w = lambda p: np.array([[logit(p)]])
    rng = np.random.default_rng(0)
    worst_empty = 0.0
    for _ in range(20):
        n_p, n_n = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        X_p = [w(p) for p in rng.uniform(0.05, 0.95, n_p)]
        X_n = [w(p) for p in rng.uniform(0.05, 0.95, n_n)]
        prior = ClassPrior(n_p / (n_p + n_n))
        worst_empty = max(worst_empty, abs(loss(ident, uptake_loss(X_p, X_n, [], prior)) - loss(ident, standard_loss(X_p, X_n))))
    fixture = ([w(0.9)], [w(0.1)], [w(0.5)])
    closed = {
        1.0: (scalar_bce(0.9, 1) + scalar_bce(0.5, 1)) / 2,
        0.0: (scalar_bce(0.1, 0) + scalar_bce(0.5, 0)) / 2,
        0.7: 0.7 * (scalar_bce(0.9, 1) + scalar_bce(0.5, 1)) / 2 + 0.3 * (scalar_bce(0.1, 0) + scalar_bce(0.5, 0)) / 2,
    }
    worst_closed = max(abs(loss(ident, uptake_loss(*fixture, ClassPrior(pi))) - v) for pi, v in closed.items())
    ok = worst_empty <= 1e-12 and worst_closed <= 1e-9 and abs(closed[0.7] - 0.399254) < 1e-6
    record("2 loss reductions", ok, f"empty-X_u gap {worst_empty:.1e} (<= 1e-12), closed-form gap {worst_closed:.1e} (<= 1e-9)")


def test_3_gradient_correctness():
    worst = {}
    for kind in ARCH_KINDS:
        arch = Arch.parse(kind if kind == "linear" else f"{kind}:4")
        rng = np.random.default_rng(100)
        errs = []
        for _ in range(50):
            l, d, n = (int(v) for v in rng.integers(1, 5, size=3))
            m = init_model(arch, (l, d), seed=int(rng.integers(1 << 30)), init_scale=0.8)
            batch = list(zip(rng.normal(size=(n, l, d)), rng.uniform(0.1, 2.0, n), rng.integers(0, 2, n)))
            fd = central_differences(lambda th: loss(m.with_theta(th), batch), m.theta, eps=1e-5)
            errs.append(max_relative_error(grad(m, batch), fd))
        worst[str(arch)] = max(errs)
    ok = all(v < 1e-4 for v in worst.values())
    record("3 gradient correctness", ok, ", ".join(f"{a} max rel err {v:.1e}" for a, v in worst.items()) + " (< 1e-4)")


def test_4_degradation_trend(bench):
    docs, _ = bench
    agg = aggregate(docs)
    t2, t5 = agg.series["naive"][0][1], agg.series["naive"][-1][1]
    record("4 degradation trend", t5 <= t2 - 0.05, f"naive F1 T2 {100 * t2:.2f} -> T5 {100 * t5:.2f} (needs drop >= 5 points)")


def test_5_strategy_ordering(bench):
    docs, _ = bench
    good, rows = 0, []
    for seed in SEEDS:
        o, u, c = (_mean_f1(docs, s, seed, {3, 4, 5}) for s in ("offline", "uptake", "certain"))
        ok = o >= u >= c and u - c >= 0.02 and o - u <= 0.10
        good += ok
        rows.append(f"seed {seed}: {100 * o:.1f}/{100 * u:.1f}/{100 * c:.1f}{'' if ok else ' x'}")
    record("5 strategy ordering", good >= 4, f"{good}/5 seeds with offline >= uptake >= certain [{'; '.join(rows)}]")


def test_6_pi_p_auto_selection():
    res = sweep_grid(GeneratorConfig(), BENCHMARK_TRAIN, seeds=SEEDS, archs=ARCHS)
    best_pi, best = res.best
    gap = best - res.auto_f1
    curve = " ".join(f"{v:.1f}:{100 * f:.1f}" for v, f in zip(res.grid, res.f1))
    record("6 pi_p auto-selection", gap <= 0.03,
           f"auto pi_p {res.auto_pi_p:.3f} F1 {100 * res.auto_f1:.2f} vs best grid {best_pi:.1f} F1 {100 * best:.2f} [{curve}]")


def test_7_efficiency_ordering(bench):
    _, timings = bench
    ratios = timing_ratio(timings, 4, "uptake", "certain")
    ok = len(ratios) == len(SEEDS) * len(ARCHS) and all(r <= 1.0 for _, _, r in ratios)
    worst = max(r for _, _, r in ratios)
    record("7 efficiency ordering", ok, f"uptake/certain seconds per epoch at the T5 refit: max ratio {worst:.2f} over {len(ratios)} cells")


def test_8_simulator_bookkeeping(bench):
    from uplearn.model import TrainConfig

    sim = run(miniature(), "uptake", "linear", TrainConfig(decision_threshold=0.5),
              initial_model=identity_model(), keep_pools=True)
    X_p, X_n, X_u = sim.pools[2]
    partition_ok = ([r.id for r in X_p], [r.id for r in X_n], [r.id for r in X_u]) == (["#10"], ["#6"], ["#7", "#8", "#9"])

    docs, _ = bench
    n = GeneratorConfig().records_per_phase
    violations = 0
    for d in docs:
        audit = d["audit"]
        for r in d["phase_reports"]:
            k, c = str(r["phase"]), r["confusion"]
            revealed = audit.get("environment", {}).get(k, 0)
            violations += revealed != c["tn"] + c["fn"] or revealed + c["tp"] + c["fp"] != n
        forbidden = set(audit) - ALLOWED_ORACLE_READERS - {"t1_labels"}
        if d["strategy"]["kind"] != "offline":
            forbidden.discard("offline")
            violations += "offline" in audit
        violations += sum(sum(v for p, v in audit[a].items() if int(p) >= 2) for a in forbidden)
        violations += any(int(p) >= 2 for p in audit.get("t1_labels", {}))
    record("8 simulator bookkeeping", partition_ok and violations == 0,
           f"miniature partition {'exact' if partition_ok else 'WRONG'}; {violations} conservation/audit violations over {len(docs)} runs")


def test_9_determinism(tmp_path):
    trees = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["run", "--out", str(out)]) == 0
        trees.append({p.name: p.read_bytes() for p in sorted((out / "runs").glob("*.json"))})
    same = trees[0] == trees[1] and len(trees[0]) == 4 * 2 * 5
    record("9 determinism", same, f"{len(trees[0])} run files, byte-identical: {same}")
