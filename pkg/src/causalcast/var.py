"""Least-squares VAR estimation: the linear Granger-causality reference.

Ordinary least squares per output channel over stacked lagged regressors,
with an intercept (harmless on z-scored data, standard practice).  Serves
both as the classical baseline and as the recovery oracle for synthetic
data with planted coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .metrics import Predictability, predictability
from .synth import VarModel

RIDGE = 1e-8
COND_LIMIT = 1e12


@dataclass
class VarFit:
    model: VarModel
    intercept: np.ndarray  # length N
    residual_variance: np.ndarray  # mean squared residual per channel
    r_squared: np.ndarray  # per channel, over the training window


def _design(x: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    n, t_len = x.shape
    rows = t_len - lag
    regressors = np.ones((rows, n * lag + 1))
    for tau in range(1, lag + 1):
        regressors[:, (tau - 1) * n : tau * n] = x[:, lag - tau : t_len - tau].T
    targets = x[:, lag:].T  # rows x N
    return regressors, targets


def fit_var(x: np.ndarray, lag_order: int) -> VarFit:
    """OLS fit of X(t) = sum_tau A_tau X(t-tau) + c + residual.

    A rank-deficient or ill-conditioned normal system falls back to ridge
    regularization (1e-8) with a conditioning warning.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ShapeError("fit_var: non-finite entries in input")
    n, t_len = x.shape
    if lag_order < 1:
        raise ShapeError(f"lag order must be >= 1, got {lag_order}")
    if t_len <= n * lag_order + 10:
        raise ShapeError(f"need T > N*L + 10 samples, got T={t_len} for N={n}, L={lag_order}")
    regressors, targets = _design(x, lag_order)
    gram = regressors.T @ regressors
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        warnings.warn(f"ill-conditioned regressor matrix (cond {cond:.3g}); applying ridge {RIDGE}")
        gram = gram + RIDGE * np.eye(gram.shape[0])
    beta = np.linalg.solve(gram, regressors.T @ targets)  # (N*L + 1) x N
    coeffs = [beta[(tau - 1) * n : tau * n, :].T.copy() for tau in range(1, lag_order + 1)]
    intercept = beta[-1, :].copy()
    residuals = targets - regressors @ beta
    residual_variance = (residuals**2).mean(axis=0)
    target_variance = targets.var(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_squared = np.where(target_variance > 0, 1.0 - residual_variance / target_variance, 0.0)
    model = VarModel(n=n, lag_order=lag_order, coeffs=coeffs, noise_sigma=float(np.sqrt(residual_variance.mean())))
    return VarFit(model=model, intercept=intercept, residual_variance=residual_variance, r_squared=r_squared)


def one_step_forecast(fit: VarFit, x: np.ndarray) -> np.ndarray:
    """In-sample one-step-ahead forecasts, N x (T - L)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != fit.model.n:
        raise ShapeError(f"forecast: {x.shape[0]} channels, model has {fit.model.n}")
    regressors, _ = _design(x, fit.model.lag_order)
    beta = np.vstack([a.T for a in fit.model.coeffs] + [fit.intercept.reshape(1, -1)])
    return (regressors @ beta).T


def var_predictability(fit: VarFit, x: np.ndarray) -> Predictability:
    """Predictability of each channel under the fitted linear model."""
    x = np.asarray(x, dtype=np.float64)
    forecasts = one_step_forecast(fit, x)
    return predictability(forecasts, x[:, fit.model.lag_order :])


__all__ = ["VarFit", "fit_var", "one_step_forecast", "var_predictability", "RIDGE"]
