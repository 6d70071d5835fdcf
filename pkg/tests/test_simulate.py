import json
import logging

import numpy as np
import pytest

from uplearn.core import LabeledRecord, Observed, PhaseDataset
from uplearn.datagen import GeneratorConfig, generate_fleet
from uplearn.metrics import Confusion, precision
from uplearn.model import Arch, TrainConfig, init_model
from uplearn.simulate import (
    DEFAULT_PI_P,
    Strategy,
    estimate_pi_p,
    initial_fit,
    run,
    run_from_json,
    strategy_oracle_reads,
)

CFG = TrainConfig(learning_rate=1.0, epochs=8, batch_size=64, decision_threshold=0.3)


def identity_model():
    """1x1 linear scorer with w=1, b=0: predicts positive iff x >= 0."""
    return init_model(Arch("linear"), (1, 1), seed=0).with_theta(np.array([1.0, 0.0]))


def miniature(extra_phase: bool = True):
    """Five labelled instances, then a phase with one false alarm (#7) and one missed failure (#10)."""
    t1 = [LabeledRecord.create(f"#{i}", 1, [[x]], y) for i, (x, y) in
          enumerate([(-2.0, 0), (-1.0, 0), (1.5, 1), (2.0, 1), (-0.5, 0)], start=1)]
    t2 = [
        LabeledRecord.create("#6", 2, [[-1.0]], 0),
        LabeledRecord.create("#7", 2, [[0.4]], 0),  # false alarm
        LabeledRecord.create("#8", 2, [[1.1]], 1),
        LabeledRecord.create("#9", 2, [[2.2]], 1),
        LabeledRecord.create("#10", 2, [[-0.3]], 1),  # missed failure
    ]
    phases = [PhaseDataset(1, t1), PhaseDataset(2, t2)]
    if extra_phase:
        phases.append(PhaseDataset(3, [LabeledRecord.create(f"#{i}", 3, [[x]], y)
                                       for i, (x, y) in enumerate([(-1.0, 0), (1.0, 1)], start=11)]))
    return phases


def test_miniature_uptake_pool():
    sim = run(miniature(), "uptake", "linear", TrainConfig(decision_threshold=0.5),
              initial_model=identity_model(), keep_pools=True)
    X_p, X_n, X_u = sim.pools[2]
    assert [r.id for r in X_p] == ["#10"]
    assert [r.id for r in X_n] == ["#6"]
    assert [r.id for r in X_u] == ["#7", "#8", "#9"]
    # a single certain positive cannot be split for validation: previous model is reused
    assert sim.boundaries[0].refit is False
    assert sim.models[1] is sim.models[0]
    rep = sim.report(2)
    assert rep.confusion == Confusion(tp=2, fp=1, tn=1, fn=1)
    assert sim.pi_p_estimate == 1.0


def test_miniature_observed_labels():
    sim = run(miniature(False), "naive", "linear", TrainConfig(decision_threshold=0.5),
              initial_model=identity_model(), keep_pools=True)
    seen = {r.id: r.observed for r in sim.observed[2]}
    assert seen == {
        "#6": Observed.CERTAIN_NEGATIVE,
        "#7": Observed.UNCERTAIN_POSITIVE,
        "#8": Observed.UNCERTAIN_POSITIVE,
        "#9": Observed.UNCERTAIN_POSITIVE,
        "#10": Observed.CERTAIN_POSITIVE,
    }
    assert sim.boundaries == []


@pytest.fixture(scope="module")
def small_fleet():
    return generate_fleet(GeneratorConfig(seed=1, records_per_phase=1000, imbalance_rate=0.03))


@pytest.fixture(scope="module")
def small_runs(small_fleet):
    init = initial_fit(small_fleet, "linear", CFG)
    return {s: run(small_fleet, s, "linear", CFG, initial=init, keep_pools=True)
            for s in ("offline", "certain", "naive", "uptake", "uptake:full")}


def test_reports_cover_phases_two_to_k(small_runs):
    for sim in small_runs.values():
        assert [r.phase for r in sim.phase_reports] == [2, 3, 4, 5]
        assert [b.phase for b in sim.boundaries] == [2, 3, 4]
        assert 0.0 <= sim.pi_p_estimate <= 1.0


def test_label_conservation_and_uncertain_set(small_fleet, small_runs):
    from uplearn.model import predict_batch

    for sim in small_runs.values():
        for k in range(2, 6):
            obs = sim.observed[k]
            counts = {o: sum(r.observed is o for r in obs) for o in Observed}
            assert counts[Observed.HIDDEN] == 0
            assert sum(counts.values()) == len(small_fleet[k - 1])
            preds = predict_batch(sim.models[k - 2], small_fleet[k - 1].X, CFG.decision_threshold)
            predicted = {r.id for r, p in zip(small_fleet[k - 1].records, preds) if p}
            assert {r.id for r in obs if r.observed is Observed.UNCERTAIN_POSITIVE} == predicted


def test_oracle_audit(small_runs):
    for name, sim in small_runs.items():
        assert strategy_oracle_reads(sim) == 0, name
        readers = sim.audit.accessors(min_phase=2)
        if name == "offline":
            assert "offline" in readers
        else:
            assert readers <= {"evaluator", "environment"}
        assert sim.audit.reads(["evaluator"], min_phase=2) == 4 * 1000


def test_certain_pool_size_at_t4(small_fleet, small_runs):
    sim = small_runs["certain"]
    X_p, X_n, X_u = sim.pools[3]
    revealed = [sum(r.observed.is_certain for r in sim.observed[k]) for k in (2, 3)]
    assert X_u == []
    assert len(X_p) + len(X_n) == len(small_fleet[0]) + revealed[0] + revealed[1]
    assert sim.boundaries[1].pool_size == len(X_p) + len(X_n)


def test_single_phase_pools(small_fleet, small_runs):
    for name in ("offline", "naive", "uptake"):
        for k in (2, 3, 4):
            X_p, X_n, X_u = small_runs[name].pools[k]
            assert len(X_p) + len(X_n) + len(X_u) == len(small_fleet[k - 1])
            assert {r.phase for r in X_p + X_n + X_u} == {k}
    assert all(small_runs["offline"].pools[k][2] == [] for k in (2, 3, 4))


def test_certain_pool_grows_and_trains_slower(small_runs):
    c, u = small_runs["certain"].boundaries, small_runs["uptake"].boundaries
    assert [b.pool_size for b in c] == sorted(b.pool_size for b in c)
    assert c[-1].pool_size > u[-1].pool_size


def test_pi_p_from_validation_precision(small_fleet):
    t1, res = initial_fit(small_fleet, "linear", CFG)
    sim = run(small_fleet, "uptake", "linear", CFG, initial=(t1, res))
    assert sim.pi_p_estimate == precision(res.val_confusion)
    assert all(b.pi_p == sim.pi_p_estimate for b in sim.boundaries)
    assert sim.pi_p_source == "estimated"


def test_pi_p_override_and_perfect_model():
    phases = miniature()
    cfg = TrainConfig(decision_threshold=0.5)
    sim = run(phases, "uptake", "linear", cfg, pi_p=0.6, initial_model=identity_model())
    assert (sim.pi_p_estimate, sim.pi_p_source) == (0.6, "override")
    # identity model classifies phase 1 perfectly
    assert run(phases, "uptake", "linear", cfg, initial_model=identity_model()).pi_p_estimate == 1.0


def test_pi_p_fallback_when_no_positive_predictions(caplog):
    never = init_model(Arch("linear"), (1, 1), seed=0).with_theta(np.array([0.0, -50.0]))
    with caplog.at_level(logging.WARNING):
        sim = run(miniature(), "uptake", "linear", CFG, initial_model=never)
    assert (sim.pi_p_estimate, sim.pi_p_source) == (DEFAULT_PI_P, "default")
    assert "falls back" in caplog.text


def test_phase_without_positives_reports_undefined(caplog):
    phases = miniature(False) + [PhaseDataset(3, [LabeledRecord.create("#11", 3, [[-1.0]], 0)])]
    with caplog.at_level(logging.WARNING):
        sim = run(phases, "naive", "linear", CFG, initial_model=identity_model())
    assert sim.report(3).f1 is None
    assert "no oracle positives" in caplog.text


@pytest.mark.parametrize("conf, expected", [((8, 2, 0, 0), 0.8), ((0, 5, 3, 1), 0.0), ((3, 0, 9, 9), 1.0)])
def test_estimate_pi_p(conf, expected):
    assert estimate_pi_p(conf) == expected
    assert abs(estimate_pi_p(Confusion(*conf)) - precision(Confusion(*conf))) <= 1e-15


def test_estimate_pi_p_undefined():
    with pytest.raises(ValueError, match="no positive predictions"):
        estimate_pi_p((0, 0, 7, 2))


def test_strategy_options():
    assert Strategy.parse("uptake:full") == Strategy("uptake", certain_full_weight=True)
    assert Strategy("certain").window is None and Strategy("naive").window == 1
    with pytest.raises(ValueError):
        Strategy("naive", certain_full_weight=True)
    with pytest.raises(ValueError):
        Strategy.parse("bogus")


def test_history_window_option(small_fleet):
    sim = run(small_fleet, Strategy("uptake", history=2), "linear", CFG, keep_pools=True)
    X_p, X_n, X_u = sim.pools[3]
    assert {r.phase for r in X_p + X_n + X_u} == {2, 3}


def test_reestimate_flag(small_fleet):
    frozen = run(small_fleet, "uptake", "linear", CFG)
    moving = run(small_fleet, "uptake", "linear", CFG, reestimate_pi_p=True)
    assert frozen.boundaries[0].pi_p == moving.boundaries[0].pi_p
    assert len({b.pi_p for b in frozen.boundaries}) == 1


def test_rejects_bad_inputs(small_fleet):
    with pytest.raises(ValueError, match="at least 2 phases"):
        run(small_fleet[:1], "naive", "linear", CFG)
    odd = PhaseDataset(2, [LabeledRecord.create("x", 2, np.zeros((3, 6)), 0)])
    with pytest.raises(ValueError, match="inconsistent window shapes"):
        run([small_fleet[0], odd], "naive", "linear", CFG)


def test_deterministic_serialisation(small_fleet, small_runs):
    again = run(small_fleet, "uptake", "linear", CFG)
    a = json.dumps(small_runs["uptake"].to_json(), sort_keys=True)
    b = json.dumps(again.to_json(), sort_keys=True)
    assert a == b


def test_json_round_trip(small_runs):
    sim = small_runs["uptake:full"]
    doc = sim.to_json(timings=True)
    back = run_from_json(json.loads(json.dumps(doc)))
    assert back.to_json(timings=True) == doc
    assert back.strategy == sim.strategy
