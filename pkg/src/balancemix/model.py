"""One-hidden-layer multi-label classifier with sigmoid outputs.

Everything here is a pure function over explicit state: ``forward`` maps
features to per-class confidences, ``batch_loss_and_grads`` returns the
weighted binary cross-entropy and its exact gradients, and ``sgd_step``
applies momentum SGD.  Gradients are stored in a ``ModelState`` so that
parameters, velocities and gradients all share one container type.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, ShapeError

#: confidences are clamped to [CLAMP, 1 - CLAMP] so BCE stays finite
CLAMP = 1e-7

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class ModelState:
    """Parameters of the classifier (or any array set with the same shapes).

    ``w1`` is ``[H, d]``, ``b1`` is ``[H]``, ``w2`` is ``[K, H]``, ``b2`` is
    ``[K]``.  The hidden activation is always a rectifier.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def arrays(self):
        return tuple(getattr(self, name) for name in PARAM_NAMES)

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def map(self, fn, *others: "ModelState") -> "ModelState":
        """Apply ``fn`` parameter-wise across this state and ``others``."""
        out = {}
        for name in PARAM_NAMES:
            out[name] = fn(getattr(self, name), *(getattr(o, name) for o in others))
        return replace(self, **out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "ModelState":
        out, pos = {}, 0
        for name in PARAM_NAMES:
            a = getattr(self, name)
            out[name] = np.asarray(vec[pos:pos + a.size], dtype=float).reshape(a.shape)
            pos += a.size
        return replace(self, **out)


def init_model(in_dim: int, hidden_dim: int, n_classes: int, rng: np.random.Generator) -> ModelState:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if min(in_dim, hidden_dim, n_classes) < 1:
        raise ContractError("model dimensions must be positive")
    s1 = 1.0 / np.sqrt(in_dim)
    s2 = 1.0 / np.sqrt(hidden_dim)
    return ModelState(
        w1=rng.uniform(-s1, s1, size=(hidden_dim, in_dim)),
        b1=rng.uniform(-s1, s1, size=hidden_dim),
        w2=rng.uniform(-s2, s2, size=(n_classes, hidden_dim)),
        b2=rng.uniform(-s2, s2, size=n_classes),
    )


def zeros_like(model: ModelState) -> ModelState:
    return model.map(np.zeros_like)


def _check_features(model: ModelState, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"expected features of width {model.in_dim}, got shape {np.shape(features)}")
    return x


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_full(model: ModelState, x: np.ndarray):
    pre = x @ model.w1.T + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.w2.T + model.b2
    return pre, hidden, logits


def logits(model: ModelState, features) -> np.ndarray:
    x = _check_features(model, features)
    return _forward_full(model, x)[2]


def forward(model: ModelState, features) -> np.ndarray:
    """Per-class confidences in ``[CLAMP, 1 - CLAMP]``, shape ``[b, K]``."""
    x = _check_features(model, features)
    return np.clip(_sigmoid(_forward_full(model, x)[2]), CLAMP, 1.0 - CLAMP)


def bce(confidence, label):
    """Binary cross-entropy, linear in a soft label ``label`` in [0, 1]."""
    f = np.asarray(confidence, dtype=float)
    y = np.asarray(label, dtype=float)
    return -y * np.log(f) - (1.0 - y) * np.log1p(-f)


@dataclass(frozen=True)
class MiniBatch:
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        b = self.features.shape[0]
        if self.labels.shape[0] != b or self.weights.shape != self.labels.shape:
            raise ShapeError("features, labels and weights disagree on batch shape")
        for name in ("labels", "weights"):
            a = getattr(self, name)
            if np.any(a < 0.0) or np.any(a > 1.0):
                raise ContractError(f"{name} must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @classmethod
    def unweighted(cls, features, labels) -> "MiniBatch":
        labels = np.asarray(labels, dtype=float)
        return cls(np.asarray(features, dtype=float), labels, np.ones_like(labels))


def batch_loss(model: ModelState, batch: MiniBatch) -> float:
    f = forward(model, batch.features)
    return float(np.sum(batch.weights * bce(f, batch.labels)) / batch.size)


def batch_loss_and_grads(model: ModelState, batch: MiniBatch) -> tuple[float, ModelState]:
    """Mean over instances of the per-label weighted BCE summed over classes.

    The logit gradient is ``weight * (f - y) / b``, i.e. the derivative of the
    unclamped sigmoid-BCE; it is then backpropagated through the rectifier.
    """
    x = _check_features(model, batch.features)
    if batch.labels.shape[1] != model.n_classes:
        raise ShapeError(f"expected {model.n_classes} label columns, got {batch.labels.shape[1]}")
    b = x.shape[0]
    pre, hidden, z = _forward_full(model, x)
    raw = _sigmoid(z)
    f = np.clip(raw, CLAMP, 1.0 - CLAMP)
    loss = float(np.sum(batch.weights * bce(f, batch.labels)) / b)

    dz = batch.weights * (raw - batch.labels) / b
    gw2 = dz.T @ hidden
    gb2 = dz.sum(axis=0)
    dh = (dz @ model.w2) * (pre > 0.0)
    gw1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    return loss, replace(model, w1=gw1, b1=gb1, w2=gw2, b2=gb2)


@dataclass(frozen=True)
class OptimizerState:
    velocity: ModelState
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be nonnegative")


def init_optimizer(model: ModelState, learning_rate: float, momentum: float = 0.9,
                   weight_decay: float = 0.0) -> OptimizerState:
    return OptimizerState(zeros_like(model), learning_rate, momentum, weight_decay)


def sgd_step(model: ModelState, opt: OptimizerState, grads: ModelState,
             learning_rate: float | None = None) -> tuple[ModelState, OptimizerState]:
    """``v <- m*v + g + wd*theta``; ``theta <- theta - lr*v``.

    ``learning_rate`` overrides the optimizer's rate for this step (schedules).
    """
    for name in PARAM_NAMES:
        if getattr(model, name).shape != getattr(grads, name).shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
    lr = opt.learning_rate if learning_rate is None else learning_rate
    m, wd = opt.momentum, opt.weight_decay
    velocity = opt.velocity.map(lambda v, g, p: m * v + g + wd * p, grads, model)
    new_model = model.map(lambda p, v: p - lr * v, velocity)
    return new_model, replace(opt, velocity=velocity)
