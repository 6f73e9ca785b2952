"""Synthetic imbalanced multi-label data and the three label-noise models.

Datasets are generated from per-class Gaussian prototypes: an instance's
feature vector is the sum of the prototypes of its positive classes plus
isotropic noise.  Positive counts follow a geometric head-to-tail profile.

Noise injectors take a clean dataset (observed == true) and return a new
dataset in which only ``observed_labels`` differs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError

SPLITS = {"train": 1, "val": 2}


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic generator.

    ``decay`` is the ratio between consecutive class frequencies, so the
    expected class-imbalance ratio is ``decay ** -(k - 1)``.  ``head_prevalence``
    is the fraction of instances carrying the most frequent class.
    ``label_correlation`` is the share of each class's secondary positives
    placed on instances that carry its partner class (the next more frequent
    one).
    """

    n: int = 2000
    d: int = 32
    k: int = 10
    decay: float = 0.5
    head_prevalence: float = 0.6
    label_correlation: float = 0.3
    separability: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if self.k < 2:
            raise ConfigError("need at least two classes")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if not 0.0 < self.head_prevalence <= 1.0:
            raise ConfigError("head_prevalence must lie in (0, 1]")
        if not 0.0 <= self.label_correlation <= 1.0:
            raise ConfigError("label_correlation must lie in [0, 1]")
        if not self.separability > 0:
            raise ConfigError("separability must be positive")

    @classmethod
    def for_imbalance(cls, ratio: float, **kw) -> "GeneratorConfig":
        """Pick ``decay`` so that head/tail counts have the requested ratio."""
        k = kw.get("k", cls.k)
        return cls(decay=float(ratio) ** (-1.0 / (k - 1)), **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray        # [N, d] float32
    true_labels: np.ndarray     # [N, K] uint8
    observed_labels: np.ndarray  # [N, K] uint8
    seed: int = 0
    noise: dict = field(default_factory=lambda: {"type": "none"})

    def __post_init__(self):
        n, k = self.true_labels.shape
        if self.features.shape[0] != n or self.observed_labels.shape != (n, k):
            raise ContractError("features and label matrices disagree on shape")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.true_labels.shape[1]

    @property
    def class_positive_counts(self) -> np.ndarray:
        return self.observed_labels.sum(axis=0).astype(np.int64)

    @property
    def class_negative_counts(self) -> np.ndarray:
        return self.n - self.class_positive_counts

    @property
    def true_positive_counts(self) -> np.ndarray:
        return self.true_labels.sum(axis=0).astype(np.int64)

    def clean(self) -> "Dataset":
        """Copy with observed labels reset to the true labels."""
        return replace(self, observed_labels=self.true_labels.copy(), noise={"type": "none"})

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], true_labels=self.true_labels[idx],
                       observed_labels=self.observed_labels[idx])


def target_counts(config: GeneratorConfig, n: int | None = None) -> np.ndarray:
    n = config.n if n is None else n
    profile = config.decay ** np.arange(config.k)
    return np.rint(config.head_prevalence * n * profile).astype(np.int64)


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    share = total * weights / weights.sum()
    out = np.floor(share).astype(np.int64)
    short = total - out.sum()
    order = np.argsort(-(share - out), kind="stable")
    out[order[:short]] += 1
    return out


def _streams(seed: int, split: str):
    root = np.random.SeedSequence(seed)
    children = root.spawn(3)
    return np.random.default_rng(children[0]), np.random.default_rng(children[SPLITS[split]])


def prototypes(config: GeneratorConfig) -> np.ndarray:
    proto_rng, _ = _streams(config.seed, "train")
    return proto_rng.standard_normal((config.k, config.d))


def _sample_labels(config: GeneratorConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    k = config.k
    targets = target_counts(config, n)
    if targets[-1] < 1:
        raise ConfigError(f"tail class expects {targets[-1]} positives; profile infeasible")
    if targets.sum() < n:
        raise ConfigError("profile yields fewer positives than instances; raise head_prevalence")

    # one primary class per instance; n <= sum(targets) keeps primary <= targets
    primary = _largest_remainder(n, targets.astype(float))
    owner = np.repeat(np.arange(k), primary)
    rng.shuffle(owner)

    y = np.zeros((n, k), dtype=np.uint8)
    y[np.arange(n), owner] = 1

    for c in range(k):
        extra = int(targets[c] - y[:, c].sum())
        if extra <= 0:
            continue
        partner = c - 1 if c > 0 else 1
        free = y[:, c] == 0
        linked = np.flatnonzero(free & (y[:, partner] == 1))
        n_linked = min(len(linked), int(round(config.label_correlation * extra)))
        chosen = rng.choice(linked, size=n_linked, replace=False) if n_linked else np.empty(0, int)
        y[chosen, c] = 1
        rest = np.flatnonzero(y[:, c] == 0)
        y[rng.choice(rest, size=extra - n_linked, replace=False), c] = 1
    return y


def generate(config: GeneratorConfig, split: str = "train", n: int | None = None) -> Dataset:
    """Draw a clean dataset.  ``split`` selects an independent instance stream
    that shares the class prototypes, so train and validation sets match."""
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    n = config.n if n is None else n
    protos = prototypes(config)
    _, rng = _streams(config.seed, split)
    y = _sample_labels(config, n, rng)
    noise = rng.standard_normal((n, config.d)) / config.separability
    x = (y.astype(float) @ protos + noise).astype(np.float32)
    return Dataset(features=x, true_labels=y, observed_labels=y.copy(), seed=config.seed)


def _require_clean(ds: Dataset):
    if not np.array_equal(ds.observed_labels, ds.true_labels):
        raise ContractError("noise must be injected into a clean dataset")


def _check_tau(tau: float):
    if not 0.0 <= tau < 1.0:
        raise ConfigError("tau must lie in [0, 1)")


def mislabel_transition(counts, tau: float) -> np.ndarray:
    """Row i holds the probability that a positive of class i moves to class j.

    ``rho[i, j] = tau * N_j / (sum(N) - N_i)`` with zero diagonal, so every
    row sums to ``tau``.
    """
    counts = np.asarray(counts, dtype=float)
    k = len(counts)
    if k < 2:
        raise ConfigError("mislabeling needs at least two classes")
    rho = np.zeros((k, k))
    total = counts.sum()
    for i in range(k):
        others = total - counts[i]
        if others > 0:
            rho[i] = tau * counts / others
            rho[i, i] = 0.0
    return rho


def sample_mislabel_moves(true_labels, tau: float, rng: np.random.Generator):
    """Decide which true positives move and where.

    Returns ``(moved, dest)``: ``moved`` is a boolean ``[N, K]`` mask of source
    labels that are moved, ``dest`` holds the destination class (``-1`` where
    nothing moves).
    """
    y = np.asarray(true_labels)
    counts = y.sum(axis=0)
    rho = mislabel_transition(counts, tau)
    n, k = y.shape
    moved = (y == 1) & (rng.random((n, k)) < tau)
    dest = np.full((n, k), -1, dtype=np.int64)
    for i in range(k):
        rows = np.flatnonzero(moved[:, i])
        if len(rows) == 0:
            continue
        if rho[i].sum() <= 0:
            moved[rows, i] = False
            continue
        dest[rows, i] = rng.choice(k, size=len(rows), p=rho[i] / rho[i].sum())
    return moved, dest


def inject_mislabeling(ds: Dataset, tau: float, seed: int) -> Dataset:
    _check_tau(tau)
    if ds.k < 2:
        raise ConfigError("mislabeling needs at least two classes")
    _require_clean(ds)
    rng = np.random.default_rng(seed)
    moved, dest = sample_mislabel_moves(ds.true_labels, tau, rng)
    obs = ds.true_labels.copy()
    obs[moved] = 0
    rows, _ = np.nonzero(moved)
    # destination already positive: bit stays 1
    obs[rows, dest[moved]] = 1
    return replace(ds, observed_labels=obs, noise={"type": "mislabel", "tau": tau, "seed": seed})


def inject_random_flip(ds: Dataset, tau: float, seed: int) -> Dataset:
    if not 0.0 <= tau <= 1.0:
        raise ConfigError("tau must lie in [0, 1]")
    _require_clean(ds)
    rng = np.random.default_rng(seed)
    flips = rng.random(ds.true_labels.shape) < tau
    obs = (ds.true_labels ^ flips.astype(np.uint8)).astype(np.uint8)
    return replace(ds, observed_labels=obs, noise={"type": "flip", "tau": tau, "seed": seed})


def inject_single_positive(ds: Dataset, seed: int) -> Dataset:
    _require_clean(ds)
    y = ds.true_labels
    n_pos = y.sum(axis=1)
    if np.any(n_pos == 0):
        raise ContractError("every instance needs at least one true positive")
    rng = np.random.default_rng(seed)
    # pick the r-th positive of each row, r uniform in [0, n_pos)
    pick = np.floor(rng.random(ds.n) * n_pos).astype(np.int64)
    rank = np.cumsum(y, axis=1) - 1
    keep = (y == 1) & (rank == pick[:, None])
    return replace(ds, observed_labels=keep.astype(np.uint8),
                   noise={"type": "single_positive", "seed": seed})


def inject_noise(ds: Dataset, kind: str, tau: float = 0.0, seed: int = 0) -> Dataset:
    if kind == "none":
        return ds
    if kind == "mislabel":
        return inject_mislabeling(ds, tau, seed)
    if kind == "flip":
        return inject_random_flip(ds, tau, seed)
    if kind == "single_positive":
        return inject_single_positive(ds, seed)
    raise ConfigError(f"unknown noise type {kind!r}")


def cls_imbalance(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts <= 0):
        raise ContractError("class imbalance undefined with a zero count")
    return float(counts.max() / counts.min())


def pn_imbalance(ds: Dataset) -> float:
    pos = ds.class_positive_counts.sum()
    if pos == 0:
        raise ContractError("no positive labels")
    return float(ds.class_negative_counts.sum() / pos)


def standard_benchmark(seed: int = 0, noise: str = "none", tau: float = 0.0,
                       n_val: int = 4000) -> tuple[Dataset, Dataset]:
    """The desk-scale benchmark: N=2000, d=32, K=10, head/tail ratio 50,
    separability 2.0.  Noise hits the training split only, seeded by
    ``seed + 100``; the validation split stays clean."""
    cfg = GeneratorConfig.for_imbalance(50, n=2000, d=32, k=10, separability=2.0, seed=seed)
    train_set = inject_noise(generate(cfg), noise, tau, seed + 100)
    return train_set, generate(cfg, "val", n_val)
