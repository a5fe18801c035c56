"""Connectome-based predictive modeling baseline.

Features are the upper-triangle Pearson correlations between channels;
the classifier is ridge regression on {0,1} labels (regression, not
logistic, matching common CPM practice).  The regularization strength is
selected on the validation split; predictions are thresholded at 0.5 for
accuracy and clipped to [0, 1] for AUC.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, ShapeError
from .metrics import FoldReport, fold_report

DEGENERATE_VARIANCE = 1e-12


def fc_features(x: np.ndarray) -> np.ndarray:
    """Upper-triangle Pearson correlations, flattened row-major.

    Degenerate channels (variance below 1e-12) correlate as 0 with a
    warning rather than raising.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    variance = x.var(axis=1)
    degenerate = variance < DEGENERATE_VARIANCE
    if degenerate.any():
        warnings.warn(f"degenerate channels correlate as 0: {np.flatnonzero(degenerate).tolist()}")
    centered = x - x.mean(axis=1, keepdims=True)
    scale = np.sqrt(variance)
    scale[degenerate] = 1.0
    standardized = centered / scale[:, None]
    corr = (standardized @ standardized.T) / x.shape[1]
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    iu = np.triu_indices(n, k=1)
    return corr[iu]


def ridge_fit(features: np.ndarray, labels: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Ridge on centered features/labels with an unpenalized intercept.

    Solves (Xc^T Xc + alpha I) w = Xc^T yc; the intercept is the label mean
    minus the feature-mean projection, so predictions tend to the training
    label mean as alpha grows.
    """
    if alpha <= 0:
        raise ConfigError(f"ridge alpha must be > 0, got {alpha}")
    x_mean = features.mean(axis=0)
    y_mean = labels.mean()
    xc = features - x_mean
    yc = labels - y_mean
    gram = xc.T @ xc + alpha * np.eye(features.shape[1])
    w = np.linalg.solve(gram, xc.T @ yc)
    intercept = float(y_mean - x_mean @ w)
    return w, intercept


def ridge_predict(features: np.ndarray, w: np.ndarray, intercept: float) -> np.ndarray:
    return features @ w + intercept


def dataset_features(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, list[str]]:
    feats = np.stack([fc_features(s.x) for s in dataset.subjects])
    labels = dataset.labels().astype(np.float64)
    return feats, labels, [s.subject_id for s in dataset.subjects]


def default_alpha_grid(n_points: int = 10, low: float = 0.5, high: float = 5e9) -> list[float]:
    return np.logspace(np.log10(low), np.log10(high), n_points).tolist()


def cpm_train_eval(
    train: Dataset,
    val: Dataset,
    test: Dataset,
    alpha_grid: list[float] | None = None,
    fold: int = 0,
) -> FoldReport:
    """Train over the alpha grid, select by validation accuracy, report test.

    Validation-accuracy ties resolve toward the larger alpha (stronger
    regularization).
    """
    grid = sorted(alpha_grid or default_alpha_grid())
    if not train.subjects or not val.subjects or not test.subjects:
        raise ConfigError("cpm_train_eval needs non-empty train/val/test splits")
    if train.n_channels != val.n_channels or train.n_channels != test.n_channels:
        raise ShapeError("splits disagree on channel count")
    x_train, y_train, _ = dataset_features(train)
    x_val, y_val, _ = dataset_features(val)
    x_test, y_test, test_ids = dataset_features(test)
    best_alpha = None
    best_accuracy = -1.0
    fits = {}
    for alpha in grid:
        w, b = ridge_fit(x_train, y_train, alpha)
        fits[alpha] = (w, b)
        val_pred = (ridge_predict(x_val, w, b) > 0.5).astype(int)
        accuracy = float((val_pred == y_val.astype(int)).mean())
        if accuracy >= best_accuracy:  # >= so ties pick the larger alpha in the sorted grid
            best_accuracy = accuracy
            best_alpha = alpha
    w, b = fits[best_alpha]
    raw = ridge_predict(x_test, w, b)
    probs = np.clip(raw, 0.0, 1.0)
    return fold_report(
        fold=fold,
        subject_ids=test_ids,
        probs=probs,
        labels=y_test.astype(int),
        predictabilities=None,
    )


__all__ = [
    "fc_features",
    "ridge_fit",
    "ridge_predict",
    "dataset_features",
    "default_alpha_grid",
    "cpm_train_eval",
]
