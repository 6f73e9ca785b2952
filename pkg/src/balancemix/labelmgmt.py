"""Label-wise management: clean / re-labeled / ambiguous triage of every label.

For each class and each label polarity a two-component univariate Gaussian
mixture is fitted (by EM) to the BCE losses of the labels of that polarity.
The small-mean component is the clean mode.  A label whose posterior of
belonging to the clean mode exceeds 0.5 is tagged clean; otherwise the model's
confidence averaged over two perturbed views may re-label it; what remains is
ambiguous and later has its loss scaled by the clean posterior.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, ContractError
from .model import ModelState, bce, forward

VAR_FLOOR = 1e-8
RESP_FLOOR = 1e-12
MIN_POINTS = 20
MAX_ITER = 100
TOL = 1e-6

_LOG_2PI = np.log(2.0 * np.pi)


class Reliability(IntEnum):
    CLEAN = 0
    RELABELED = 1
    AMBIGUOUS = 2


UNTAGGED = -1


@dataclass(frozen=True)
class GmmFit:
    """One fitted two-component mixture, components sorted by mean.

    Index 0 is always the clean (small-loss) mode.  ``status`` is
    ``"converged"`` or ``"degenerate_fallback"``; in the fallback case the
    parameters are placeholders and every label is treated as clean.
    """

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    status: str
    n_iter: int = 0
    n_points: int = 0
    log_likelihood: tuple = ()

    clean_mode = 0

    @property
    def degenerate(self) -> bool:
        return self.status == "degenerate_fallback"


def _degenerate(losses) -> GmmFit:
    m = float(np.mean(losses)) if len(losses) else 0.0
    return GmmFit(means=np.array([m, m]), variances=np.array([VAR_FLOOR, VAR_FLOOR]),
                  weights=np.array([1.0, 0.0]), status="degenerate_fallback", n_points=len(losses))


def _log_joint(x, means, variances, weights):
    # [n, 2] log(pi_c * N(x; mu_c, var_c))
    diff = x[:, None] - means[None, :]
    return (np.log(weights)[None, :] - 0.5 * (_LOG_2PI + np.log(variances))[None, :]
            - 0.5 * diff * diff / variances[None, :])


def fit_gmm(losses, max_iter: int = MAX_ITER, tol: float = TOL) -> GmmFit:
    """EM for a two-component 1-D Gaussian mixture.

    Initialised with means at the 20th/80th percentiles, both variances at
    the sample variance and equal weights.  Stops when the mean per-point
    log-likelihood changes by less than ``tol`` or after ``max_iter``
    iterations.  Each iteration costs O(n).
    """
    x = np.asarray(losses, dtype=float).ravel()
    n = len(x)
    if n < MIN_POINTS:
        return _degenerate(x)
    var0 = float(x.var())
    if var0 <= VAR_FLOOR:
        return _degenerate(x)

    means = np.percentile(x, [20.0, 80.0])
    variances = np.array([var0, var0])
    weights = np.array([0.5, 0.5])

    history = []
    prev = -np.inf
    it = 0
    for it in range(1, max_iter + 1):
        lj = _log_joint(x, means, variances, weights)
        top = lj.max(axis=1, keepdims=True)
        log_norm = top[:, 0] + np.log(np.exp(lj - top).sum(axis=1))
        ll = float(log_norm.mean())
        history.append(ll)
        if abs(ll - prev) < tol:
            break
        prev = ll

        resp = np.maximum(np.exp(lj - log_norm[:, None]), RESP_FLOOR)
        nk = resp.sum(axis=0)
        weights = nk / nk.sum()
        means = (resp * x[:, None]).sum(axis=0) / nk
        diff = x[:, None] - means[None, :]
        variances = np.maximum((resp * diff * diff).sum(axis=0) / nk, VAR_FLOOR)

    order = np.argsort(means, kind="stable")
    return GmmFit(means=means[order], variances=variances[order], weights=weights[order],
                  status="converged", n_iter=it, n_points=n, log_likelihood=tuple(history))


def clean_posterior(gmm: GmmFit, loss) -> np.ndarray:
    """Posterior probability that ``loss`` came from the small-loss mode."""
    x = np.atleast_1d(np.asarray(loss, dtype=float))
    if gmm.degenerate:
        return np.ones_like(x)
    lj = _log_joint(x, gmm.means, gmm.variances, gmm.weights)
    # with both densities underflowing, keep the mode whose log-density is larger
    top = lj.max(axis=1, keepdims=True)
    w = np.exp(lj - top)
    return w[:, 0] / w.sum(axis=1)


def collect_loss_partitions(confidences, labels):
    """``parts[k][l]`` holds the BCE losses of class ``k``'s labels equal to
    ``l`` (instance order preserved)."""
    f = np.asarray(confidences, dtype=float)
    y = np.asarray(labels)
    losses = bce(f, y)
    return [[losses[y[:, k] == 0, k], losses[y[:, k] == 1, k]] for k in range(y.shape[1])]


@dataclass(frozen=True)
class GmmBank:
    """``fits[k][l]``: mixture over losses of class ``k`` labels equal to ``l``."""

    fits: list

    def posterior(self, losses, labels) -> np.ndarray:
        y = np.asarray(labels)
        out = np.empty(y.shape, dtype=float)
        for k in range(y.shape[1]):
            for pol in (0, 1):
                rows = y[:, k] == pol
                if rows.any():
                    out[rows, k] = clean_posterior(self.fits[k][pol], losses[rows, k])
        return out


def fit_gmm_bank(confidences, labels, threads: int = 1) -> GmmBank:
    parts = collect_loss_partitions(confidences, labels)
    jobs = [losses for pair in parts for losses in pair]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(fit_gmm, jobs))
    else:
        flat = [fit_gmm(j) for j in jobs]
    return GmmBank([flat[2 * k:2 * k + 2] for k in range(len(parts))])


@dataclass(frozen=True)
class ViewAugmenter:
    """Stochastic view of a feature matrix: additive Gaussian noise scaled by
    each feature's standard deviation, then inverted dropout."""

    noise_scale: float = 0.1
    dropout: float = 0.1

    def __post_init__(self):
        if self.noise_scale < 0 or not 0 <= self.dropout < 1:
            raise ConfigError("noise_scale must be >= 0 and dropout in [0, 1)")

    def __call__(self, features, rng: np.random.Generator, feature_std=None) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if self.noise_scale > 0:
            std = x.std(axis=0) if feature_std is None else np.asarray(feature_std, float)
            x = x + self.noise_scale * std * rng.standard_normal(x.shape)
        if self.dropout > 0:
            keep = rng.random(x.shape) >= self.dropout
            x = x * keep / (1.0 - self.dropout)
        return x


def two_view_confidence(model: ModelState, features, rng: np.random.Generator, k: int | None = None,
                        augmenter: ViewAugmenter = ViewAugmenter(), feature_std=None):
    """Mean confidence over two independently augmented views; column ``k`` only
    when ``k`` is given."""
    v1 = forward(model, augmenter(features, rng, feature_std))
    v2 = forward(model, augmenter(features, rng, feature_std))
    mean = 0.5 * (v1 + v2)
    return mean if k is None else mean[:, k]


@dataclass(frozen=True)
class LabelLedger:
    """Per-label state after management.

    ``ensemble`` stores the two-view confidence for labels that went through
    the re-labeling test (NaN for clean ones) so re-label decisions can be
    replayed.
    """

    working: np.ndarray      # [N, K] uint8
    reliability: np.ndarray  # [N, K] int8
    clean_posterior: np.ndarray  # [N, K] float
    ensemble: np.ndarray     # [N, K] float

    @classmethod
    def all_clean(cls, labels) -> "LabelLedger":
        y = np.asarray(labels, dtype=np.uint8).copy()
        return cls(working=y, reliability=np.zeros(y.shape, np.int8),
                   clean_posterior=np.ones(y.shape), ensemble=np.full(y.shape, np.nan))

    def counts(self) -> dict:
        return {code: int((self.reliability == tag).sum()) for code, tag in zip("CRU", Reliability)}

    def loss_weights(self, rows=None) -> np.ndarray:
        """1 for clean and re-labeled labels, the clean posterior for ambiguous ones."""
        rel = self.reliability if rows is None else self.reliability[rows]
        post = self.clean_posterior if rows is None else self.clean_posterior[rows]
        return loss_weights(rel, post)


def loss_weights(reliability, posterior) -> np.ndarray:
    rel = np.asarray(reliability)
    valid = np.isin(rel, [int(t) for t in Reliability])
    if not valid.all():
        raise ContractError("every label needs a reliability tag")
    return np.where(rel == Reliability.AMBIGUOUS, np.asarray(posterior, float), 1.0)


def check_epsilon(epsilon: float):
    if not 0.5 < epsilon <= 1.0:
        raise ConfigError("epsilon must lie in (0.5, 1]")


def triage(posterior, ensemble_conf, labels, epsilon: float) -> LabelLedger:
    """Tag labels from clean posteriors and two-view confidences.

    ``ensemble_conf`` only matters where ``posterior <= 0.5``.
    """
    check_epsilon(epsilon)
    post = np.asarray(posterior, float)
    conf = np.asarray(ensemble_conf, float)
    working = np.asarray(labels, dtype=np.uint8).copy()
    clean = post > 0.5
    up = ~clean & (conf > epsilon)
    down = ~clean & (conf < 1.0 - epsilon)
    working[up] = 1
    working[down] = 0
    rel = np.full(working.shape, Reliability.AMBIGUOUS, dtype=np.int8)
    rel[clean] = Reliability.CLEAN
    rel[up | down] = Reliability.RELABELED
    ensemble = np.where(clean, np.nan, conf)
    return LabelLedger(working=working, reliability=rel, clean_posterior=post, ensemble=ensemble)


def manage_labels(model: ModelState, features, labels, epsilon: float, rng: np.random.Generator,
                  augmenter: ViewAugmenter = ViewAugmenter(), threads: int = 1):
    """Run one management pass on a frozen model.

    ``labels`` is the base the pass starts from (current working labels, or
    the original observed labels).  Returns ``(ledger, bank)``.
    """
    check_epsilon(epsilon)
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.uint8)
    f = forward(model, x)
    bank = fit_gmm_bank(f, y, threads=threads)
    post = bank.posterior(bce(f, y), y)
    conf = two_view_confidence(model, x, rng, augmenter=augmenter)
    return triage(post, conf, y, epsilon), bank
