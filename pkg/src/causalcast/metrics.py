"""Classification metrics, the predictability score, and ROI rank tables.

Predictability of channel i is 1 - E_i / Var(target_i) where E_i is the
mean squared one-step forecast error and Var is the population variance of
the target window; 1 means a perfect forecast, 0 means no better than the
channel mean.  Per-subject top-k predictable ROIs are aggregated into
population-level occurrence tables over correctly classified subjects.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UndefinedMetricError

VARIANCE_FLOOR = 1e-12


@dataclass
class Predictability:
    per_roi: np.ndarray  # NaN marks channels with degenerate target variance
    target_variance: np.ndarray

    def defined(self) -> np.ndarray:
        return ~np.isnan(self.per_roi)


def predictability(x_hat: np.ndarray, target: np.ndarray) -> Predictability:
    """Per-channel P_i = 1 - mean((target - x_hat)^2) / Var(target)."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if x_hat.shape != target.shape:
        raise ShapeError(f"predictability: shapes {x_hat.shape} and {target.shape} differ")
    errors = ((target - x_hat) ** 2).mean(axis=1)
    variance = target.var(axis=1)
    per_roi = np.full(target.shape[0], np.nan)
    ok = variance > VARIANCE_FLOOR
    per_roi[ok] = 1.0 - errors[ok] / variance[ok]
    if not ok.all():
        channels = np.flatnonzero(~ok).tolist()
        warnings.warn(f"predictability undefined for zero-variance channels: {channels}")
    return Predictability(per_roi=per_roi, target_variance=variance)


def rank_rois(pred: Predictability, k: int) -> list[int]:
    """Indices of the k largest defined P_i; ties break toward lower index."""
    defined = np.flatnonzero(pred.defined())
    if defined.size < k:
        warnings.warn(f"only {defined.size} defined predictability values for top-{k} ranking")
    # argsort on (-P, index): stable sort over index after sorting by value.
    order = defined[np.lexsort((defined, -pred.per_roi[defined]))]
    return order[:k].tolist()


@dataclass
class RankTable:
    population: str  # "ASD" or "control"
    entries: list[tuple[int, str, int]]  # (roi_index, roi_name, occurrence count)

    def position_of(self, roi_index: int) -> int | None:
        """1-based rank of an ROI in the table, None if absent."""
        for pos, (idx, _, _) in enumerate(self.entries, start=1):
            if idx == roi_index:
                return pos
        return None


def aggregate_top10(
    rankings: list[list[int]],
    labels: list[int],
    n_rois: int,
    roi_names: list[str] | None = None,
    table_size: int = 10,
) -> tuple[RankTable, RankTable]:
    """Occurrence tables of per-subject top-k ROIs, one per population.

    ``rankings`` must already be restricted to correctly classified subjects;
    ``labels`` gives each subject's true class (1 = ASD, 0 = control).
    """
    if len(rankings) != len(labels):
        raise ShapeError(f"{len(rankings)} rankings for {len(labels)} labels")
    names = roi_names or [f"roi_{i:03d}" for i in range(n_rois)]
    tables = []
    for population, wanted in (("ASD", 1), ("control", 0)):
        counts = np.zeros(n_rois, dtype=int)
        members = 0
        for ranking, label in zip(rankings, labels):
            if label != wanted:
                continue
            members += 1
            for roi in ranking:
                counts[roi] += 1
        if members == 0:
            warnings.warn(f"no correctly classified subjects in population {population!r}")
        order = np.lexsort((np.arange(n_rois), -counts))
        entries = [(int(i), names[i], int(counts[i])) for i in order[:table_size] if counts[i] > 0]
        tables.append(RankTable(population=population, entries=entries))
    return tables[0], tables[1]


def auc(scores: list[tuple[float, int]]) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2."""
    values = np.array([s for s, _ in scores], dtype=np.float64)
    labels = np.array([y for _, y in scores], dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_values = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class ClassificationCounts:
    tp: int
    fp: int
    fn: int
    tn: int


def classification_metrics(scores: list[tuple[float, int]], threshold: float = 0.5) -> dict:
    """Accuracy, recall, precision at the threshold plus confusion counts.

    Precision is None (undefined, not 0) when nothing is predicted positive.
    A score is predicted positive iff it exceeds the threshold.
    """
    if not scores:
        raise ShapeError("classification_metrics over an empty score list")
    tp = fp = fn = tn = 0
    for p, y in scores:
        predicted = 1 if p > threshold else 0
        if predicted == 1 and y == 1:
            tp += 1
        elif predicted == 1 and y == 0:
            fp += 1
        elif predicted == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    return {
        "accuracy": (tp + tn) / total,
        "recall": recall,
        "precision": precision,
        "counts": ClassificationCounts(tp=tp, fp=fp, fn=fn, tn=tn),
    }


@dataclass
class SubjectReport:
    subject_id: str
    p: float
    y: int
    predictability: list[float] | None  # NaN serialized as None entries

    def to_dict(self) -> dict:
        pred = None
        if self.predictability is not None:
            pred = [None if np.isnan(v) else float(v) for v in self.predictability]
        return {"subject_id": self.subject_id, "p": self.p, "y": self.y, "predictability": pred}


@dataclass
class FoldReport:
    fold: int
    accuracy: float
    auc: float
    recall: float | None
    precision: float | None
    counts: ClassificationCounts
    subjects: list[SubjectReport] = field(default_factory=list)

    def metrics_dict(self) -> dict:
        return {
            "fold": self.fold,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "recall": self.recall,
            "precision": self.precision,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "tn": self.counts.tn,
        }

    def to_dict(self) -> dict:
        out = self.metrics_dict()
        out["subjects"] = [s.to_dict() for s in self.subjects]
        return out


def fold_report(
    fold: int,
    subject_ids: list[str],
    probs: np.ndarray,
    labels: np.ndarray,
    predictabilities: list[Predictability] | None = None,
    threshold: float = 0.5,
) -> FoldReport:
    scores = list(zip(probs.tolist(), labels.tolist()))
    cls = classification_metrics(scores, threshold=threshold)
    subjects = []
    for i, sid in enumerate(subject_ids):
        pred = predictabilities[i].per_roi.tolist() if predictabilities is not None else None
        subjects.append(SubjectReport(subject_id=sid, p=float(probs[i]), y=int(labels[i]), predictability=pred))
    return FoldReport(
        fold=fold,
        accuracy=cls["accuracy"],
        auc=auc(scores),
        recall=cls["recall"],
        precision=cls["precision"],
        counts=cls["counts"],
        subjects=subjects,
    )


__all__ = [
    "Predictability",
    "RankTable",
    "ClassificationCounts",
    "SubjectReport",
    "FoldReport",
    "predictability",
    "rank_rois",
    "aggregate_top10",
    "auc",
    "classification_metrics",
    "fold_report",
]
