"""Mixup between a random-sampler instance and a minority-sampler instance.

The mixing weight is folded onto [0.5, 1] so that the random-sampler instance
always dominates; per-label reliability tags and ambiguous-label weights are
therefore inherited from it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


def draw_lambda(alpha: float, rng: np.random.Generator, size=None):
    """``max(l, 1 - l)`` with ``l ~ Beta(alpha, alpha)``."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    lam = fold_lambda(rng.beta(alpha, alpha, size=size))
    return float(lam) if size is None else lam


def fold_lambda(raw):
    raw = np.asarray(raw, dtype=float)
    return np.maximum(raw, 1.0 - raw)


@dataclass(frozen=True)
class Instance:
    """A training instance as seen by the mixer (labels may be refined)."""

    features: np.ndarray
    labels: np.ndarray
    reliability: np.ndarray
    ambiguous_weight: np.ndarray


@dataclass(frozen=True)
class MixedInstance:
    features: np.ndarray
    labels: np.ndarray
    reliability: np.ndarray
    ambiguous_weight: np.ndarray
    lam: float


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0.5) or np.any(lam > 1.0):
        raise ContractError("mixing weight must lie in [0.5, 1]")
    return lam


def mix(random_inst: Instance, minority_inst: Instance, lam: float) -> MixedInstance:
    lam = float(_check_lambda(lam))
    if (np.shape(random_inst.features) != np.shape(minority_inst.features)
            or np.shape(random_inst.labels) != np.shape(minority_inst.labels)):
        raise ContractError("instances must share feature and label dimensions")
    return MixedInstance(
        features=lam * np.asarray(random_inst.features, float) + (1 - lam) * np.asarray(minority_inst.features, float),
        labels=lam * np.asarray(random_inst.labels, float) + (1 - lam) * np.asarray(minority_inst.labels, float),
        reliability=np.array(random_inst.reliability, copy=True),
        ambiguous_weight=np.array(random_inst.ambiguous_weight, dtype=float, copy=True),
        lam=lam,
    )


def mix_batch(x_r, y_r, x_m, y_m, lam):
    """Row-wise mixing of two batches; ``lam`` is a scalar or one weight per row.

    Only features and labels are mixed here; the caller attaches the
    random-sampler rows' tags and weights unchanged.
    """
    lam = _check_lambda(lam)
    col = lam[:, None] if lam.ndim else lam
    x = col * np.asarray(x_r, float) + (1 - col) * np.asarray(x_m, float)
    y = col * np.asarray(y_r, float) + (1 - col) * np.asarray(y_m, float)
    return x, y
