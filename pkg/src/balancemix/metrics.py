"""Average precision, shot-grouped mAP and label-management diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .labelmgmt import LabelLedger, Reliability


def average_precision(scores, truths) -> float:
    """Mean of precision@r over the ranks r of the positives.

    Ranking is by descending score; ties keep ascending index order.
    Returns NaN when there is no positive.
    """
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truths).astype(bool)
    if t.sum() == 0:
        return float("nan")
    order = np.argsort(-s, kind="stable")
    hits = t[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def per_class_ap(scores, truths) -> np.ndarray:
    s = np.asarray(scores)
    t = np.asarray(truths)
    return np.array([average_precision(s[:, k], t[:, k]) for k in range(s.shape[1])])


@dataclass(frozen=True)
class GroupSpec:
    """Shot-group thresholds on per-class positive counts.

    many: count > t_many; few: count < t_medium; medium otherwise.
    """

    t_many: float
    t_medium: float

    def __post_init__(self):
        if not self.t_many > self.t_medium > 0:
            raise ConfigError("need t_many > t_medium > 0")

    @classmethod
    def relative(cls, n: int, many: float = 0.25, few: float = 0.05) -> "GroupSpec":
        return cls(t_many=many * n, t_medium=few * n)

    @classmethod
    def coco(cls) -> "GroupSpec":
        return cls(t_many=10_000, t_medium=1_000)

    def assign(self, counts) -> np.ndarray:
        c = np.asarray(counts, dtype=float)
        return np.where(c > self.t_many, "many", np.where(c < self.t_medium, "few", "medium"))


def _mean_or_none(values):
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    return float(values.mean()) if len(values) else None


def grouped_map(per_class, counts, spec: GroupSpec) -> dict:
    """Unweighted mean AP over all classes and within each shot group.

    Classes with undefined AP are skipped; an empty group maps to ``None``.
    """
    ap = np.asarray(per_class, dtype=float)
    groups = spec.assign(counts)
    out = {"all": _mean_or_none(ap)}
    for name in ("many", "medium", "few"):
        out[name] = _mean_or_none(ap[groups == name])
    return out


@dataclass(frozen=True)
class ManagementDiagnostics:
    label_precision: float | None
    label_recall: float | None
    relabel_proportion: float
    relabel_accuracy: float | None
    n_clean_selected: int
    n_relabeled: int
    n_ambiguous: int
    n_total: int
    n_truly_clean: int
    n_selected_correct: int
    n_relabeled_correct: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def selection_metrics(ledger: LabelLedger, true_labels, observed_labels) -> ManagementDiagnostics:
    """Precision/recall of the clean-tagged set against labels whose observed
    value is correct, plus share and accuracy of re-labeled labels."""
    y = np.asarray(true_labels)
    obs = np.asarray(observed_labels)
    rel = ledger.reliability
    if rel.shape != y.shape:
        raise ContractError("ledger and labels disagree on shape")
    clean = rel == Reliability.CLEAN
    relab = rel == Reliability.RELABELED
    correct = ledger.working == y
    n_c, n_r = int(clean.sum()), int(relab.sum())
    n_l = int((obs == y).sum())
    c_ok = int((clean & correct).sum())
    r_ok = int((relab & correct).sum())
    return ManagementDiagnostics(
        label_precision=c_ok / n_c if n_c else None,
        label_recall=c_ok / n_l if n_l else None,
        relabel_proportion=n_r / y.size,
        relabel_accuracy=r_ok / n_r if n_r else None,
        n_clean_selected=n_c,
        n_relabeled=n_r,
        n_ambiguous=int((rel == Reliability.AMBIGUOUS).sum()),
        n_total=int(y.size),
        n_truly_clean=n_l,
        n_selected_correct=c_ok,
        n_relabeled_correct=r_ok,
    )


def metrics_report(scores, truths, group_counts, spec: GroupSpec, diagnostics=None) -> dict:
    """Metrics in the on-disk JSON schema."""
    ap = per_class_ap(scores, truths)
    g = grouped_map(ap, group_counts, spec)
    return {
        "map_all": g["all"],
        "map_many": g["many"],
        "map_medium": g["medium"],
        "map_few": g["few"],
        "per_class": [None if np.isnan(a) else float(a) for a in ap],
        "diagnostics": diagnostics.to_dict() if diagnostics is not None else {},
    }
