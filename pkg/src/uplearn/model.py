"""Differentiable binary scorers with analytic gradients.

Three architectures share one flat parameter vector layout each:

* ``linear``  -- flatten the window, ``z = x.w + b``
* ``mlp``     -- flatten, one tanh hidden layer, linear read-out
* ``recur``   -- Elman recurrence over the time axis, ``s_t = tanh(x_t Wx + s_{t-1} Ws + b)``,
  score read out from the final state

All scores go through a sigmoid. The training objective is the weight-normalised
binary cross entropy ``sum_i w_i bce(p_i, y_i) / sum_i w_i`` with ``p`` clamped to
``[1e-12, 1 - 1e-12]``; clamped examples contribute zero gradient.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from scipy.special import expit

from .core import Oracle

PROB_CLAMP = 1e-12
ARCH_KINDS = ("linear", "mlp", "recur")


@dataclasses.dataclass(frozen=True)
class Arch:
    kind: str
    hidden: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ARCH_KINDS:
            raise ValueError(f"unknown architecture {self.kind!r}; expected one of {ARCH_KINDS}")
        if self.kind == "linear":
            if self.hidden is not None:
                raise ValueError("linear architecture takes no hidden size")
        elif self.hidden is None or int(self.hidden) < 1:
            raise ValueError(f"{self.kind} needs a positive hidden size")

    @classmethod
    def parse(cls, spec: "str | Arch") -> "Arch":
        """Parse ``linear``, ``mlp:16`` or ``recur:8``."""
        if isinstance(spec, Arch):
            return spec
        kind, _, hidden = str(spec).strip().lower().partition(":")
        if kind == "linear":
            return cls("linear")
        return cls(kind, int(hidden) if hidden else 16)

    def __str__(self) -> str:
        return self.kind if self.hidden is None else f"{self.kind}:{self.hidden}"

    def to_json(self) -> dict:
        return {"kind": self.kind, "hidden": self.hidden}


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 40
    batch_size: int = 64
    seed: int = 0
    init_scale: float = 0.1
    decision_threshold: float = 0.5
    val_fraction: float = 0.2

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision_threshold must lie in (0, 1)")
        if not 0.0 < self.val_fraction < 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5)")


@dataclasses.dataclass(frozen=True, eq=False)
class ModelState:
    arch: Arch
    theta: np.ndarray
    input_shape: tuple[int, int]

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64).ravel()
        shape = tuple(int(s) for s in self.input_shape)
        expected = n_params(self.arch, shape)
        if theta.size != expected:
            raise ValueError(f"{self.arch} on {shape} needs {expected} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite model parameters")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "input_shape", shape)

    def with_theta(self, theta: np.ndarray) -> "ModelState":
        return ModelState(self.arch, theta, self.input_shape)


def n_params(arch: Arch, input_shape: tuple[int, int]) -> int:
    l, d = input_shape
    if arch.kind == "linear":
        return l * d + 1
    h = arch.hidden
    if arch.kind == "mlp":
        return l * d * h + h + h + 1
    return d * h + h * h + h + h + 1


def init_model(arch: "Arch | str", input_shape: tuple[int, int], seed: int = 0, init_scale: float = 0.1) -> ModelState:
    """Uniform ``[-init_scale, init_scale]`` initialisation from ``seed``."""
    arch = Arch.parse(arch)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-init_scale, init_scale, size=n_params(arch, input_shape))
    return ModelState(arch, theta, input_shape)


def _unpack(m: ModelState):
    l, d = m.input_shape
    t = m.theta
    if m.arch.kind == "linear":
        return t[: l * d], t[l * d]
    h = m.arch.hidden
    if m.arch.kind == "mlp":
        i = l * d * h
        W1 = t[:i].reshape(l * d, h)
        b1 = t[i : i + h]
        w2 = t[i + h : i + 2 * h]
        return W1, b1, w2, t[i + 2 * h]
    i = d * h
    Wx = t[:i].reshape(d, h)
    Ws = t[i : i + h * h].reshape(h, h)
    i += h * h
    return Wx, Ws, t[i : i + h], t[i + h : i + 2 * h], t[i + 2 * h]


def _as_batch(m: ModelState, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != m.input_shape:
        raise ValueError(f"input shape {X.shape[1:] if X.ndim == 3 else X.shape} does not match model input {m.input_shape}")
    return X


def _scores(m: ModelState, X: np.ndarray, keep: bool = False):
    n = X.shape[0]
    kind = m.arch.kind
    if kind == "linear":
        w, b = _unpack(m)
        Xf = X.reshape(n, -1)
        z = Xf @ w + b
        return (z, (Xf,)) if keep else z
    if kind == "mlp":
        W1, b1, w2, b2 = _unpack(m)
        Xf = X.reshape(n, -1)
        hid = np.tanh(Xf @ W1 + b1)
        z = hid @ w2 + b2
        return (z, (Xf, hid)) if keep else z
    Wx, Ws, bs, wo, bo = _unpack(m)
    s = np.zeros((n, m.arch.hidden))
    states = [s]
    for t in range(X.shape[1]):
        s = np.tanh(X[:, t, :] @ Wx + s @ Ws + bs)
        states.append(s)
    z = s @ wo + bo
    return (z, (states,)) if keep else z


def forward_batch(m: ModelState, X) -> np.ndarray:
    """Failure probabilities for a stack of windows ``(n, l, d)``."""
    return expit(_scores(m, _as_batch(m, X)))


def forward(m: ModelState, X) -> float:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != m.input_shape:
        raise ValueError(f"window shape {X.shape} does not match model input {m.input_shape}")
    return float(forward_batch(m, X)[0])


def predict(m: ModelState, X, threshold: float = 0.5) -> Oracle:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return Oracle.POSITIVE if forward(m, X) >= threshold else Oracle.NEGATIVE


def predict_batch(m: ModelState, X, threshold: float = 0.5) -> np.ndarray:
    """0/1 predictions; ties at the threshold go to Positive."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (forward_batch(m, X) >= threshold).astype(np.int8)


def bce(p, y):
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def _batch_arrays(batch):
    """Accept a WeightedBatch-like object or a list of (window, weight, target)."""
    if hasattr(batch, "X") and hasattr(batch, "weights"):
        return np.asarray(batch.X, dtype=np.float64), np.asarray(batch.weights, dtype=np.float64), np.asarray(batch.targets, dtype=np.float64)
    items = list(batch)
    if not items:
        raise ValueError("empty batch")
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _, _ in items])
    w = np.array([wt for _, wt, _ in items], dtype=np.float64)
    y = np.array([t for _, _, t in items], dtype=np.float64)
    return X, w, y


def _check_weights(w: np.ndarray) -> float:
    if w.size == 0:
        raise ValueError("empty batch")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("batch weights must be finite and nonnegative")
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("degenerate batch: all weights are zero")
    return total


def loss(m: ModelState, batch) -> float:
    X, w, y = _batch_arrays(batch)
    total = _check_weights(w)
    return float(np.dot(w, bce(forward_batch(m, X), y)) / total)


def grad(m: ModelState, batch) -> np.ndarray:
    """Gradient of the weight-normalised BCE with respect to ``m.theta``."""
    X, w, y = _batch_arrays(batch)
    total = _check_weights(w)
    X = _as_batch(m, X)
    z, cache = _scores(m, X, keep=True)
    p = expit(z)
    live = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    dz = np.where(live, p - y, 0.0) * (w / total)

    kind = m.arch.kind
    if kind == "linear":
        (Xf,) = cache
        return np.concatenate([Xf.T @ dz, [dz.sum()]])
    if kind == "mlp":
        Xf, hid = cache
        _, _, w2, _ = _unpack(m)
        da = np.outer(dz, w2) * (1.0 - hid**2)
        return np.concatenate([(Xf.T @ da).ravel(), da.sum(0), hid.T @ dz, [dz.sum()]])

    (states,) = cache
    Wx, Ws, _, wo, _ = _unpack(m)
    gWx = np.zeros_like(Wx)
    gWs = np.zeros_like(Ws)
    gbs = np.zeros(Ws.shape[0])
    ds = np.outer(dz, wo)
    for t in range(X.shape[1], 0, -1):
        da = ds * (1.0 - states[t] ** 2)
        gWx += X[:, t - 1, :].T @ da
        gWs += states[t - 1].T @ da
        gbs += da.sum(0)
        ds = da @ Ws.T
    return np.concatenate([gWx.ravel(), gWs.ravel(), gbs, states[-1].T @ dz, [dz.sum()]])


def checkpoint_dict(m: ModelState, decision_threshold: float = 0.5) -> dict:
    return {
        "arch": m.arch.to_json(),
        "input_shape": list(m.input_shape),
        "theta": [float(v) for v in m.theta],
        "decision_threshold": float(decision_threshold),
    }


def model_from_checkpoint(doc: dict) -> tuple[ModelState, float]:
    arch = Arch(doc["arch"]["kind"], doc["arch"].get("hidden"))
    m = ModelState(arch, np.array(doc["theta"], dtype=np.float64), tuple(doc["input_shape"]))
    return m, float(doc.get("decision_threshold", 0.5))


def save_checkpoint(path: "str | Path", m: ModelState, decision_threshold: float = 0.5) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(m, decision_threshold), indent=1) + "\n")


def load_checkpoint(path: "str | Path") -> tuple[ModelState, float]:
    return model_from_checkpoint(json.loads(Path(path).read_text()))
