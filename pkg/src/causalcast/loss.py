"""Frequency loss, binary cross-entropy, and the scaled combined objective.

The frequency loss compares discrete Fourier transforms of predicted and
true signals channel by channel and sums the complex modulus of the bin
differences; the absolute value (rather than its square) keeps bins with a
large spectrum from dominating.  The combined objective sums BCE and
alpha-scaled frequency loss over the subjects of a batch, so batch size
interacts with alpha (see the config guide in the README).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

PROB_CLAMP = 1e-7

_dft_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _dft_basis(t_len: int) -> tuple[np.ndarray, np.ndarray]:
    """T x K real/imaginary DFT basis, laid out for right-multiplication."""
    cached = _dft_cache.get(t_len)
    if cached is None:
        angles = 2.0 * np.pi * np.outer(np.arange(t_len), np.arange(t_len)) / t_len
        cached = (np.cos(angles), -np.sin(angles))
        _dft_cache[t_len] = cached
    return cached


@dataclass(frozen=True)
class LossBreakdown:
    bce: float
    freq: float
    total: float
    alpha: float


def freq_loss_graph(x_hat: Tensor, x: Tensor) -> Tensor:
    """Sum over channels and bins of |DFT(x_hat_i) - DFT(x_i)|.

    Rows are channels (or stacked subject-channel rows); the DFT runs along
    the column (time) axis.  Uses linearity: DFT(x_hat) - DFT(x) =
    DFT(x_hat - x).
    """
    x_hat, x = ad.as_tensor(x_hat), ad.as_tensor(x)
    if x_hat.shape != x.shape:
        raise ShapeError(f"freq_loss: shapes {x_hat.shape} and {x.shape} differ")
    basis_re, basis_im = _dft_basis(x_hat.cols)
    diff = x_hat - x
    f_re = ad.matmul(diff, basis_re)
    f_im = ad.matmul(diff, basis_im)
    return ad.sum_all(ad.complex_abs(f_re, f_im))


def freq_loss(x_hat, x) -> float:
    return freq_loss_graph(ad.as_tensor(np.asarray(x_hat)), ad.as_tensor(np.asarray(x))).item()


def bce_graph(p: Tensor, y: Tensor) -> Tensor:
    """Summed binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7]."""
    pc = ad.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_subject = -(y * ad.log(pc) + (1.0 - y) * ad.log(1.0 - pc))
    return ad.sum_all(per_subject)


def bce(p: float, y: int) -> float:
    return bce_graph(Tensor([[float(p)]]), Tensor([[float(y)]])).item()


def total_loss(batch, alpha: float) -> LossBreakdown:
    """Combined objective over a batch of (p, y, x_hat, x) tuples.

    Per-subject BCE and alpha-scaled frequency losses are summed (not
    averaged) across the batch.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    if not batch:
        raise ConfigError("total_loss over an empty batch")
    bce_sum = 0.0
    freq_sum = 0.0
    for p, y, x_hat, x in batch:
        bce_sum += bce(p, y)
        freq_sum += freq_loss(x_hat, x)
    return LossBreakdown(bce=bce_sum, freq=freq_sum, total=bce_sum + alpha * freq_sum, alpha=alpha)


__all__ = [
    "LossBreakdown",
    "PROB_CLAMP",
    "freq_loss",
    "freq_loss_graph",
    "bce",
    "bce_graph",
    "total_loss",
]
