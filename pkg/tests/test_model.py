import math

import numpy as np
import pytest

from oracles import central_differences, max_relative_error, recurrence_reference
from uplearn.core import Oracle
from uplearn.model import (
    Arch,
    ModelState,
    TrainConfig,
    forward,
    forward_batch,
    grad,
    init_model,
    load_checkpoint,
    loss,
    n_params,
    predict,
    predict_batch,
    save_checkpoint,
)

ARCHS = [Arch("linear"), Arch("mlp", 5), Arch("recur", 4)]


def random_case(arch, rng, l=3, d=2, n=6):
    m = init_model(arch, (l, d), seed=int(rng.integers(1 << 30)), init_scale=0.8)
    X = rng.normal(size=(n, l, d))
    w = rng.uniform(0.1, 2.0, size=n)
    y = rng.integers(0, 2, size=n)
    return m, list(zip(X, w, y))


def test_zero_linear_is_half():
    m = ModelState(Arch("linear"), np.zeros(5), (2, 2))
    assert forward(m, np.ones((2, 2))) == 0.5


def test_linear_closed_form():
    m = ModelState(Arch("linear"), [2.0, 0.0], (1, 1))
    assert forward(m, [[1.0]]) == pytest.approx(0.880797, abs=1e-6)
    assert forward(m, [[1.0]]) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-15)


def test_recurrence_matches_reference():
    rng = np.random.default_rng(11)
    m = init_model("recur:3", (5, 2), seed=4, init_scale=0.7)
    X = rng.normal(size=(5, 2))
    assert forward(m, X) == pytest.approx(recurrence_reference(list(m.theta), X.tolist(), 3), abs=1e-12)


def test_mlp_matches_explicit_formula():
    rng = np.random.default_rng(2)
    m = init_model("mlp:3", (2, 2), seed=9, init_scale=0.9)
    x = rng.normal(size=(2, 2))
    t = m.theta
    W1 = t[:12].reshape(4, 3)
    h = np.tanh(x.ravel() @ W1 + t[12:15])
    z = h @ t[15:18] + t[18]
    assert forward(m, x) == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-14)


def test_shape_mismatch():
    m = init_model("linear", (2, 3))
    with pytest.raises(ValueError):
        forward(m, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ModelState(Arch("linear"), np.zeros(3), (2, 3))


def test_single_example_gradient():
    m = ModelState(Arch("linear"), [0.0, 0.0], (1, 1))
    g = grad(m, [(np.array([[1.0]]), 1.0, 1)])
    np.testing.assert_allclose(g, [-0.5, -0.5])


@pytest.mark.parametrize("arch", ARCHS, ids=str)
def test_gradient_vs_finite_differences(arch):
    rng = np.random.default_rng(7)
    for _ in range(10):
        m, batch = random_case(arch, rng)
        fd = central_differences(lambda th: loss(m.with_theta(th), batch), m.theta)
        assert max_relative_error(grad(m, batch), fd) < 1e-4


@pytest.mark.parametrize("arch", ARCHS, ids=str)
def test_duplicated_batch_same_gradient(arch):
    rng = np.random.default_rng(1)
    m, batch = random_case(arch, rng)
    np.testing.assert_allclose(grad(m, batch + batch), grad(m, batch), rtol=1e-12, atol=1e-15)


def test_degenerate_batch():
    m = init_model("linear", (1, 1))
    with pytest.raises(ValueError, match="degenerate batch"):
        grad(m, [(np.array([[1.0]]), 0.0, 1)])
    with pytest.raises(ValueError):
        grad(m, [(np.array([[1.0]]), -1.0, 1)])


def test_predict_tie_goes_positive():
    m = ModelState(Arch("linear"), [1.0, 0.0], (1, 1))
    p = forward(m, [[0.3]])
    assert predict(m, [[0.3]], threshold=p) is Oracle.POSITIVE
    zero = ModelState(Arch("linear"), [0.0, 0.0], (1, 1))
    assert all(predict(zero, [[v]], 0.5) is Oracle.POSITIVE for v in (-5.0, 0.0, 7.0))


@pytest.mark.parametrize("arch", ARCHS, ids=str)
def test_predict_agrees_with_forward(arch):
    rng = np.random.default_rng(5)
    m = init_model(arch, (3, 2), seed=3, init_scale=1.0)
    X = rng.normal(size=(50, 3, 2))
    thr = 0.45
    direct = [1 if forward(m, x) >= thr else 0 for x in X]
    assert predict_batch(m, X, thr).tolist() == direct
    assert [int(predict(m, x, thr)) for x in X] == direct


def test_forward_is_pure_and_init_deterministic():
    a = init_model("mlp:4", (3, 2), seed=42, init_scale=0.3)
    b = init_model("mlp:4", (3, 2), seed=42, init_scale=0.3)
    assert np.array_equal(a.theta, b.theta)
    assert np.all(np.abs(a.theta) <= 0.3)
    X = np.random.default_rng(0).normal(size=(4, 3, 2))
    assert np.array_equal(forward_batch(a, X), forward_batch(a, X))


def test_param_counts():
    assert n_params(Arch("linear"), (3, 2)) == 7
    assert n_params(Arch("mlp", 4), (3, 2)) == 6 * 4 + 4 + 4 + 1
    assert n_params(Arch("recur", 4), (3, 2)) == 2 * 4 + 16 + 4 + 4 + 1


def test_arch_parse():
    assert Arch.parse("mlp:8") == Arch("mlp", 8)
    assert Arch.parse("linear") == Arch("linear")
    assert str(Arch.parse("recur:3")) == "recur:3"
    with pytest.raises(ValueError):
        Arch.parse("transformer")


def test_checkpoint_roundtrip(tmp_path):
    m = init_model("recur:3", (4, 2), seed=1)
    path = tmp_path / "m.json"
    save_checkpoint(path, m, 0.4)
    back, thr = load_checkpoint(path)
    assert back.arch == m.arch and back.input_shape == m.input_shape
    assert np.array_equal(back.theta, m.theta) and thr == 0.4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(decision_threshold=1.0)
