"""Random and confidence-based minority samplers.

The minority sampler draws instance ``n`` with probability proportional to
``1 / Score(n)``, where ``Score(n)`` sums, over classes, the dataset-wide mean
confidence of the instance's own label polarity.  Instances whose labels the
model currently predicts poorly (typically those carrying minority positives)
get oversampled, and the oversampling fades as those confidences improve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

SCORE_FLOOR = 1e-6


@dataclass(frozen=True)
class ConfidenceTable:
    """Per-class mean confidence over positive (``presence``) and negative
    (``absence``) labels.  Entries with empty support are NaN."""

    presence: np.ndarray
    absence: np.ndarray
    positive_support: np.ndarray
    negative_support: np.ndarray


def update_confidence_table(confidences, labels) -> ConfidenceTable:
    f = np.asarray(confidences, dtype=float)
    y = np.asarray(labels) == 1
    if f.shape != y.shape:
        raise ContractError("confidences and labels must have the same shape")
    n_pos = y.sum(axis=0)
    n_neg = (~y).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        presence = np.where(y, f, 0.0).sum(axis=0) / n_pos
        absence = np.where(~y, 1.0 - f, 0.0).sum(axis=0) / n_neg
    presence = np.where(n_pos > 0, presence, np.nan)
    absence = np.where(n_neg > 0, absence, np.nan)
    return ConfidenceTable(presence, absence, n_pos, n_neg)


def instance_scores(table: ConfidenceTable, labels) -> np.ndarray:
    """Score of every row of ``labels`` (``[N, K]`` or a single ``[K]`` row)."""
    y = np.atleast_2d(np.asarray(labels)) == 1
    terms = np.where(y, table.presence, table.absence)
    if np.any(np.isnan(terms)):
        raise ContractError("labels reference a class polarity with no support in the table")
    return np.maximum(terms.sum(axis=1), SCORE_FLOOR)


def instance_score(table: ConfidenceTable, labels) -> float:
    return float(instance_scores(table, labels)[0])


def sampling_distribution(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if np.any(s <= 0):
        raise ContractError("scores must be positive")
    inv = 1.0 / s
    return inv / inv.sum()


@dataclass(frozen=True)
class SamplerState:
    scores: np.ndarray
    probs: np.ndarray
    epoch_of_last_update: int = 0

    @classmethod
    def uniform(cls, n: int) -> "SamplerState":
        return cls(scores=np.ones(n), probs=np.full(n, 1.0 / n), epoch_of_last_update=0)

    @classmethod
    def from_model_outputs(cls, confidences, labels, epoch: int) -> "SamplerState":
        table = update_confidence_table(confidences, labels)
        scores = instance_scores(table, labels)
        return cls(scores=scores, probs=sampling_distribution(scores), epoch_of_last_update=epoch)

    @property
    def n(self) -> int:
        return len(self.probs)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


def _check_batch(n: int, b: int):
    if b < 1 or b > n:
        raise ContractError(f"batch size {b} must lie in [1, {n}]")


def random_batches(n: int, b: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of the random sampler: ``n // b`` disjoint batches from a
    fresh permutation (the remainder is dropped)."""
    _check_batch(n, b)
    perm = rng.permutation(n)
    return [perm[i * b:(i + 1) * b] for i in range(n // b)]


def draw_random_batch(n: int, b: int, rng: np.random.Generator) -> np.ndarray:
    _check_batch(n, b)
    return rng.permutation(n)[:b]


def draw_minority_batch(state: SamplerState, b: int, rng: np.random.Generator) -> np.ndarray:
    """``b`` i.i.d. draws with replacement from the sampling distribution."""
    _check_batch(state.n, b)
    return rng.choice(state.n, size=b, replace=True, p=state.probs)
