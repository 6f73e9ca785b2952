"""Training loop: warm-up on minority-augmented Mixup, then label management
plus the reliability-weighted loss.  ``mode="bce_baseline"`` trains the same
network with plain BCE on shuffled batches and nothing else."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as mdl
from .datagen import Dataset
from .errors import ConfigError, ContractError
from .labelmgmt import LabelLedger, ViewAugmenter, check_epsilon, loss_weights, manage_labels
from .metrics import GroupSpec, metrics_report, selection_metrics
from .mixing import draw_lambda, mix_batch
from .sampling import (SamplerState, draw_minority_batch, instance_scores, random_batches,
                       sampling_distribution, update_confidence_table)

log = logging.getLogger(__name__)

MODES = ("balancemix", "bce_baseline")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    warmup_epochs: int = 10
    batch_size: int = 64
    alpha: float = 4.0
    epsilon: float = 0.975
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    hidden_dim: int = 128
    seed: int = 0
    mode: str = "balancemix"
    sampler_label_source: str = "refined"
    management_base: str = "working"
    cosine: bool = False
    aug_noise: float = 0.1
    aug_dropout: float = 0.1
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise ConfigError("epochs, batch_size and hidden_dim must be positive")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError("warmup_epochs must lie in [0, epochs]")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        check_epsilon(self.epsilon)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.sampler_label_source not in ("refined", "original"):
            raise ConfigError("sampler_label_source must be 'refined' or 'original'")
        if self.management_base not in ("working", "original"):
            raise ConfigError("management_base must be 'working' or 'original'")
        if not self.learning_rate > 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigError("invalid optimizer settings")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochReport:
    epoch: int
    mean_loss: float
    counts: dict
    sampler_entropy: float
    metrics: dict = field(default_factory=dict)
    diagnostics: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochSnapshot:
    """Analytics kept per epoch for inspection (sampler and GMM state)."""

    epoch: int
    probs: np.ndarray
    presence: np.ndarray | None
    absence: np.ndarray | None
    gmm: np.ndarray | None  # [K, 2 polarities, 2 components, (mean, var, weight)] or None
    gmm_status: np.ndarray | None  # [K, 2] bool, True where degenerate
    counts: dict


@dataclass
class TrainResult:
    model: mdl.ModelState
    reports: list
    snapshots: list
    ledger: LabelLedger | None


def composite_loss(model: mdl.ModelState, features, labels, reliability, posterior):
    """Batch mean of the per-instance sum over labels of BCE, where ambiguous
    labels are scaled by their clean posterior.  Returns ``(loss, grads)``."""
    weights = loss_weights(reliability, posterior)
    batch = mdl.MiniBatch(np.asarray(features, float), np.asarray(labels, float), weights)
    return mdl.batch_loss_and_grads(model, batch)


def evaluate(model: mdl.ModelState, valset: Dataset, group_counts, spec: GroupSpec, diagnostics=None) -> dict:
    """Metrics of ``model`` against the validation set's true labels."""
    return metrics_report(mdl.forward(model, valset.features), valset.true_labels, group_counts,
                          spec, diagnostics)


def _streams(seed: int):
    names = ("init", "random", "minority", "lambda", "manage")
    seqs = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, seqs)}


def _gmm_array(bank):
    k = len(bank.fits)
    params = np.zeros((k, 2, 2, 3))
    degenerate = np.zeros((k, 2), dtype=bool)
    for c in range(k):
        for pol in (0, 1):
            fit = bank.fits[c][pol]
            params[c, pol] = np.stack([fit.means, fit.variances, fit.weights], axis=1)
            degenerate[c, pol] = fit.degenerate
    return params, degenerate


def _entropy(p) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _lr_at(config: TrainConfig, step: int, total: int) -> float:
    if not config.cosine:
        return config.learning_rate
    return 0.5 * config.learning_rate * (1.0 + np.cos(np.pi * step / total))


def train(config: TrainConfig, dataset: Dataset, valset: Dataset | None = None,
          group_spec: GroupSpec | None = None, on_epoch=None) -> TrainResult:
    """Train from scratch; fully deterministic given ``config.seed``.

    Each epoch takes ``N // batch_size`` steps over a fresh permutation.  In
    BalanceMix mode every step pairs that random batch with a minority batch,
    mixes them row-wise and updates on the reliability-weighted loss (plain
    BCE during warm-up).  At the end of each epoch the sampling distribution
    is refreshed, and from the end of the last warm-up epoch on the GMMs are
    refitted and all labels re-triaged; the resulting ledger governs the next
    epoch.
    """
    if valset is not None and (valset.d != dataset.d or valset.k != dataset.k):
        raise ContractError("dataset and valset must share d and K")
    n, k = dataset.n, dataset.k
    if config.batch_size > n:
        raise ConfigError("batch_size exceeds dataset size")
    spec = group_spec or GroupSpec.relative(n)
    group_counts = dataset.true_positive_counts

    rngs = _streams(config.seed)
    x = dataset.features.astype(float)
    observed = dataset.observed_labels.astype(np.uint8)
    augmenter = ViewAugmenter(config.aug_noise, config.aug_dropout)
    baseline = config.mode == "bce_baseline"

    model = mdl.init_model(dataset.d, config.hidden_dim, k, rngs["init"])
    opt = mdl.init_optimizer(model, config.learning_rate, config.momentum, config.weight_decay)
    sampler = SamplerState.uniform(n)
    ledger: LabelLedger | None = None

    steps_per_epoch = n // config.batch_size
    total_steps = steps_per_epoch * config.epochs
    step = 0
    reports, snapshots = [], []

    for epoch in range(1, config.epochs + 1):
        active = ledger if epoch > config.warmup_epochs else None
        labels = observed if active is None else active.working
        losses = []
        for idx_r in random_batches(n, config.batch_size, rngs["random"]):
            if baseline:
                batch_x = x[idx_r]
                batch_y = labels[idx_r].astype(float)
                weights = np.ones_like(batch_y)
            else:
                idx_m = draw_minority_batch(sampler, config.batch_size, rngs["minority"])
                lam = draw_lambda(config.alpha, rngs["lambda"], size=len(idx_r))
                batch_x, batch_y = mix_batch(x[idx_r], labels[idx_r], x[idx_m], labels[idx_m], lam)
                # tags and ambiguous weights follow the random-sampler row
                weights = np.ones_like(batch_y) if active is None else active.loss_weights(idx_r)
            loss, grads = mdl.batch_loss_and_grads(model, mdl.MiniBatch(batch_x, batch_y, weights))
            model, opt = mdl.sgd_step(model, opt, grads, _lr_at(config, step, total_steps))
            losses.append(loss)
            step += 1

        if not model.is_finite():
            raise ContractError(f"non-finite parameters after epoch {epoch}")

        counts = active.counts() if active is not None else {"C": n * k, "R": 0, "U": 0}
        diagnostics = (selection_metrics(active, dataset.true_labels, observed)
                       if active is not None else None)

        snap = EpochSnapshot(epoch, sampler.probs, None, None, None, None, counts)
        if not baseline:
            conf = mdl.forward(model, x)
            if config.sampler_label_source == "original" or ledger is None:
                sampler_labels = observed
            else:
                sampler_labels = ledger.working
            table = update_confidence_table(conf, sampler_labels)
            scores = instance_scores(table, sampler_labels)
            sampler = SamplerState(scores, sampling_distribution(scores), epoch)
            snap.probs, snap.presence, snap.absence = sampler.probs, table.presence, table.absence
            if config.warmup_epochs <= epoch < config.epochs:
                base = observed if (ledger is None or config.management_base == "original") else ledger.working
                ledger, bank = manage_labels(model, x, base, config.epsilon, rngs["manage"],
                                             augmenter=augmenter, threads=config.threads)
                snap.gmm, snap.gmm_status = _gmm_array(bank)
        snapshots.append(snap)

        metrics = evaluate(model, valset, group_counts, spec) if valset is not None else {}
        report = EpochReport(epoch=epoch, mean_loss=float(np.mean(losses)), counts=counts,
                             sampler_entropy=_entropy(snap.probs),
                             metrics=metrics,
                             diagnostics=diagnostics.to_dict() if diagnostics is not None else None)
        reports.append(report)
        log.debug("epoch %d loss %.4f counts %s", epoch, report.mean_loss, counts)
        if on_epoch is not None:
            on_epoch(report)

    return TrainResult(model=model, reports=reports, snapshots=snapshots, ledger=active)
