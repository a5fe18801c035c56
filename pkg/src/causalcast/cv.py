"""Stratified 5-fold cross-validation with train/validation/test splits.

Test folds partition the dataset with class proportions balanced to within
one subject per fold; each fold's validation set is drawn from its non-test
pool.  Folds run as independent workers with derived seeds and merge by
fold index, so results are identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cpm import cpm_train_eval
from .data import Dataset, prepared_pair
from .errors import ConfigError
from .loss import freq_loss
from .metrics import FoldReport, Predictability, RankTable, aggregate_top10, fold_report, predictability, rank_rois
from .model import ModelConfig, NetworkParams, forward, forward_batch
from .trainer import TrainConfig, TrainResult, train

N_FOLDS = 5


@dataclass
class FoldSplit:
    train: list[int]
    val: list[int]
    test: list[int]


@dataclass
class SplitPlan:
    folds: list[FoldSplit]
    seed: int


def make_splits(dataset: Dataset, seed: int, val_fraction: float = 0.125, n_folds: int = N_FOLDS) -> SplitPlan:
    """Stratified test partition plus per-fold validation subsets."""
    labels = dataset.labels()
    if len(dataset) < 10:
        raise ConfigError(f"need at least 10 subjects for cross-validation, got {len(dataset)}")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ConfigError("both classes must be present for stratified splitting")
    rng = np.random.default_rng([seed, 31])
    test_folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        for i, idx in enumerate(members):
            test_folds[i % n_folds].append(int(idx))
    folds = []
    for f in range(n_folds):
        test = sorted(test_folds[f])
        pool = [i for i in range(len(dataset)) if i not in set(test)]
        val: list[int] = []
        for cls in classes:
            cls_pool = np.array([i for i in pool if labels[i] == cls])
            n_val = int(round(len(cls_pool) * val_fraction))
            picked = cls_pool[rng.permutation(len(cls_pool))][:n_val]
            val.extend(int(i) for i in picked)
        val = sorted(val)
        train_idx = sorted(set(pool) - set(val))
        folds.append(FoldSplit(train=train_idx, val=val, test=test))
    return SplitPlan(folds=folds, seed=seed)


def fold_seed(base_seed: int, fold: int) -> int:
    return base_seed * 1000003 + fold


def _group_by_shape(indices: list[int], pairs: list) -> list[list[int]]:
    groups: dict[tuple[int, int], list[int]] = {}
    for i in indices:
        groups.setdefault(pairs[i].input.shape, []).append(i)
    return [groups[k] for k in sorted(groups)]


def evaluate_model_fold(
    params: NetworkParams,
    dataset: Dataset,
    test_indices: list[int],
    fold: int,
    batch_size: int = 32,
) -> FoldReport:
    """Forward passes over the test split: probabilities plus predictability."""
    pairs = {i: prepared_pair(dataset.subjects[i], params.lag) for i in test_indices}
    probs: dict[int, float] = {}
    preds: dict[int, Predictability] = {}
    for group in _group_by_shape(list(test_indices), pairs):
        for start in range(0, len(group), batch_size):
            chunk = group[start : start + batch_size]
            results, p = forward_batch([pairs[i] for i in chunk], params)
            for j, i in enumerate(chunk):
                probs[i] = float(p[j])
                preds[i] = predictability(results[j].x_hat, pairs[i].target)
    ordered = sorted(test_indices)
    return fold_report(
        fold=fold,
        subject_ids=[dataset.subjects[i].subject_id for i in ordered],
        probs=np.array([probs[i] for i in ordered]),
        labels=np.array([dataset.subjects[i].label for i in ordered]),
        predictabilities=[preds[i] for i in ordered],
    )


def run_single_fold(
    dataset: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    split: FoldSplit,
    fold: int,
    baseline: str | None = None,
) -> FoldReport:
    if baseline == "cpm":
        return cpm_train_eval(
            dataset.subset(split.train),
            dataset.subset(split.val),
            dataset.subset(split.test),
            fold=fold,
        )
    if baseline is not None:
        raise ConfigError(f"unknown baseline {baseline!r}")
    cfg = replace(train_cfg, seed=fold_seed(train_cfg.seed, fold))
    result: TrainResult = train(dataset.subset(split.train), model_cfg, cfg)
    return evaluate_model_fold(result.params, dataset, split.test, fold=fold)


def _fold_worker(args) -> FoldReport:
    dataset, model_cfg, train_cfg, split, fold, baseline = args
    return run_single_fold(dataset, model_cfg, train_cfg, split, fold, baseline=baseline)


def format_pct(mean: float, std: float) -> str:
    return f"{mean * 100:.1f}% ± {std * 100:.1f}%"


def summarize_folds(folds: list[FoldReport]) -> dict:
    """Mean and sample standard deviation per metric across folds."""
    summary = {}
    for metric in ("accuracy", "auc", "recall", "precision"):
        values = [getattr(f, metric) for f in folds if getattr(f, metric) is not None]
        if not values:
            summary[metric] = {"mean": None, "std": None, "formatted": "undefined", "n_folds": 0}
            continue
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        summary[metric] = {
            "mean": mean,
            "std": std,
            "formatted": format_pct(mean, std),
            "n_folds": len(values),
        }
    return summary


@dataclass
class CvResult:
    folds: list[FoldReport]
    summary: dict
    plan: SplitPlan

    def to_dict(self) -> dict:
        return {
            "folds": [f.metrics_dict() for f in self.folds],
            "summary": self.summary,
            "n_folds": len(self.folds),
        }


def run_cv(
    dataset: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    jobs: int = 1,
    baseline: str | None = None,
    val_fraction: float = 0.125,
) -> CvResult:
    """Train and evaluate every fold; deterministic for any job count."""
    plan = make_splits(dataset, seed=train_cfg.seed, val_fraction=val_fraction)
    args = [
        (dataset, model_cfg, train_cfg, split, fold, baseline)
        for fold, split in enumerate(plan.folds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
            folds = list(pool.map(_fold_worker, args))
    else:
        folds = [_fold_worker(a) for a in args]
    folds.sort(key=lambda f: f.fold)
    return CvResult(folds=folds, summary=summarize_folds(folds), plan=plan)


def rank_tables_from_folds(
    folds: list[FoldReport],
    n_rois: int,
    roi_names: list[str] | None = None,
    top_k: int = 10,
    table_size: int = 10,
    threshold: float = 0.5,
) -> tuple[RankTable, RankTable]:
    """Aggregate per-subject top-k predictable ROIs over correct test subjects."""
    rankings: list[list[int]] = []
    labels: list[int] = []
    for fold in folds:
        for s in fold.subjects:
            if s.predictability is None:
                continue
            predicted = 1 if s.p > threshold else 0
            if predicted != s.y:
                continue
            per_roi = np.array([math.nan if v is None else v for v in s.predictability])
            pred = Predictability(per_roi=per_roi, target_variance=np.ones_like(per_roi))
            rankings.append(rank_rois(pred, top_k))
            labels.append(s.y)
    return aggregate_top10(rankings, labels, n_rois, roi_names=roi_names, table_size=table_size)


def sweep_alpha(
    dataset: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    alphas: list[float],
    val_fraction: float = 0.125,
) -> list[dict]:
    """Train fold-0 per alpha; emit validation accuracy and scaled freq loss.

    The frequency-loss column is scaled by the sweep maximum, so its largest
    entry is exactly 1.0.
    """
    if not alphas:
        raise ConfigError("alpha sweep needs at least one value")
    plan = make_splits(dataset, seed=train_cfg.seed, val_fraction=val_fraction)
    split = plan.folds[0]
    rows = []
    for alpha in alphas:
        cfg = replace(train_cfg, alpha=alpha, seed=fold_seed(train_cfg.seed, 0))
        result = train(dataset.subset(split.train), model_cfg, cfg)
        report = evaluate_model_fold(result.params, dataset, split.val, fold=0)
        freq = _mean_val_freq(result.params, dataset, split.val)
        rows.append({"alpha": alpha, "val_accuracy": report.accuracy, "freq_loss": freq})
    max_freq = max(r["freq_loss"] for r in rows)
    for r in rows:
        r["scaled_freq_loss"] = r["freq_loss"] / max_freq if max_freq > 0 else 0.0
    return rows


def sweep_heads(
    dataset: Dataset,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    head_counts: list[int],
    val_fraction: float = 0.125,
) -> list[dict]:
    """Validation accuracy on fold 0 for each pooling head count."""
    if not head_counts:
        raise ConfigError("head sweep needs at least one value")
    plan = make_splits(dataset, seed=train_cfg.seed, val_fraction=val_fraction)
    split = plan.folds[0]
    rows = []
    for heads in head_counts:
        cfg_m = replace(model_cfg, heads=heads)
        cfg_m.validate()
        cfg = replace(train_cfg, seed=fold_seed(train_cfg.seed, 0))
        result = train(dataset.subset(split.train), cfg_m, cfg)
        report = evaluate_model_fold(result.params, dataset, split.val, fold=0)
        rows.append({"heads": heads, "val_accuracy": report.accuracy})
    return rows


def _mean_val_freq(params: NetworkParams, dataset: Dataset, indices: list[int]) -> float:
    total = 0.0
    for i in indices:
        pair = prepared_pair(dataset.subjects[i], params.lag)
        result, _ = forward(pair, params)
        total += freq_loss(result.x_hat, pair.target)
    return total / len(indices)


__all__ = [
    "FoldSplit",
    "SplitPlan",
    "CvResult",
    "N_FOLDS",
    "make_splits",
    "fold_seed",
    "run_cv",
    "run_single_fold",
    "evaluate_model_fold",
    "summarize_folds",
    "format_pct",
    "rank_tables_from_folds",
    "sweep_alpha",
    "sweep_heads",
]
