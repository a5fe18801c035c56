"""Synthetic two-class datasets from linear VAR processes with planted edges.

Class 0 follows a sparse random stable VAR.  Class 1 shares that structure
plus strong directed edges into channels 0 and 1, so those channels become
highly predictable from the past of the others only in class 1.  This gives
ground truth for both classification and predictability ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, RoiTimeSeries
from .errors import ShapeError, StationarityError

PLANTED_TARGETS = (0, 1)
PLANTED_SOURCES = ((2, 3, 4), (5, 6, 7))
SPECTRAL_RADIUS_CAP = 0.95


@dataclass
class VarModel:
    """Linear VAR(L) process: X(t) = sum_tau A_tau X(t-tau) + eps(t)."""

    n: int
    lag_order: int
    coeffs: list[np.ndarray]  # L matrices, each N x N
    noise_sigma: float

    def __post_init__(self) -> None:
        if len(self.coeffs) != self.lag_order:
            raise ShapeError(f"{len(self.coeffs)} coefficient matrices for lag order {self.lag_order}")
        self.coeffs = [np.asarray(a, dtype=np.float64) for a in self.coeffs]
        for a in self.coeffs:
            if a.shape != (self.n, self.n):
                raise ShapeError(f"coefficient matrix shape {a.shape}, expected ({self.n}, {self.n})")

    def companion(self) -> np.ndarray:
        n, lag = self.n, self.lag_order
        comp = np.zeros((n * lag, n * lag))
        comp[:n, :] = np.hstack(self.coeffs)
        if lag > 1:
            comp[n:, : n * (lag - 1)] = np.eye(n * (lag - 1))
        return comp

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    def is_stationary(self) -> bool:
        return self.spectral_radius() < 1.0


@dataclass
class SynthSpec:
    n: int
    t_len: int
    subjects_per_class: int
    lag_order: int
    class0_model: VarModel
    class1_model: VarModel
    seed: int

    def __post_init__(self) -> None:
        for model in (self.class0_model, self.class1_model):
            if model.n != self.n or model.lag_order != self.lag_order:
                raise ShapeError("class models must share n and lag_order with the spec")


def simulate(model: VarModel, t_len: int, burn_in: int, rng: np.random.Generator) -> np.ndarray:
    """Iterate the VAR recursion from a zero initial state.

    Gaussian noise of scale noise_sigma drives every step; the first
    ``burn_in`` samples are discarded so the retained window is approximately
    stationary.  Deterministic given the generator state.
    """
    if not model.is_stationary():
        raise StationarityError(
            f"VAR model is not stationary (spectral radius {model.spectral_radius():.4f} >= 1)"
        )
    if burn_in < 10 * model.lag_order:
        raise ShapeError(f"burn_in {burn_in} < 10 * lag order {model.lag_order}")
    n, lag = model.n, model.lag_order
    total = burn_in + t_len
    noise = rng.normal(0.0, model.noise_sigma, size=(total, n))
    x = np.zeros((total, n))
    for t in range(total):
        acc = noise[t].copy()
        for tau in range(1, lag + 1):
            if t - tau >= 0:
                acc += model.coeffs[tau - 1] @ x[t - tau]
        x[t] = acc
    return x[burn_in:].T.copy()  # N x t_len


def subject_rng(seed: int, class_label: int, index: int) -> np.random.Generator:
    """Child generator for one subject, stable across parallel generation."""
    return np.random.default_rng([seed, class_label, index])


def make_dataset(spec: SynthSpec, burn_in: int | None = None) -> Dataset:
    """Simulate subjects_per_class series per class, labels 0/1, mean FD 0."""
    burn = burn_in if burn_in is not None else max(50, 10 * spec.lag_order)
    subjects = []
    for label, model in ((0, spec.class0_model), (1, spec.class1_model)):
        for i in range(spec.subjects_per_class):
            rng = subject_rng(spec.seed, label, i)
            x = simulate(model, spec.t_len, burn, rng)
            subjects.append(
                RoiTimeSeries(
                    subject_id=f"synth-c{label}-{i:03d}",
                    label=label,
                    mean_fd=0.0,
                    x=x,
                )
            )
    labels = [f"roi_{i:03d}" for i in range(spec.n)]
    return Dataset(subjects, labels)


def _rescale_to_cap(a: np.ndarray, cap: float) -> np.ndarray:
    radius = float(np.max(np.abs(np.linalg.eigvals(a))))
    if radius > cap:
        a = a * (cap / radius)
    return a


def default_coefficients(
    n: int = 10,
    seed: int = 18,
    planted_weight: float = 0.4,
    density: float = 0.1,
    radius_cap: float = SPECTRAL_RADIUS_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Build the default lag-1 class coefficient matrices.

    Class 0: diagonal AR terms plus sparse random off-diagonal couplings.
    Class 1: class 0 plus directed edges of ``planted_weight`` into channels
    0 and 1 from fixed source sets.  Both matrices are rescaled if needed to
    keep the spectral radius at or below ``radius_cap``.
    """
    if n <= max(max(s) for s in PLANTED_SOURCES):
        raise ShapeError(f"default generator needs n >= 8 for its planted source channels, got {n}")
    rng = np.random.default_rng([seed, 101])
    a0 = np.diag(rng.uniform(0.2, 0.4, size=n))
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    signs = rng.choice([-1.0, 1.0], size=(n, n))
    magnitudes = rng.uniform(0.2, 0.4, size=(n, n))
    a0 = a0 + mask * signs * magnitudes
    a0 = _rescale_to_cap(a0, radius_cap)

    a1 = a0.copy()
    for target, sources in zip(PLANTED_TARGETS, PLANTED_SOURCES):
        for src in sources:
            a1[target, src] += planted_weight
    a1 = _rescale_to_cap(a1, radius_cap)
    return a0, a1


def default_two_class_spec(
    subjects_per_class: int = 10,
    seed: int = 18,
    n: int = 10,
    t_len: int = 150,
    noise_sigma: float = 0.5,
    planted_weight: float = 0.4,
    radius_cap: float = SPECTRAL_RADIUS_CAP,
) -> SynthSpec:
    a0, a1 = default_coefficients(n=n, seed=seed, planted_weight=planted_weight, radius_cap=radius_cap)
    return SynthSpec(
        n=n,
        t_len=t_len,
        subjects_per_class=subjects_per_class,
        lag_order=1,
        class0_model=VarModel(n=n, lag_order=1, coeffs=[a0], noise_sigma=noise_sigma),
        class1_model=VarModel(n=n, lag_order=1, coeffs=[a1], noise_sigma=noise_sigma),
        seed=seed,
    )


__all__ = [
    "VarModel",
    "SynthSpec",
    "simulate",
    "subject_rng",
    "make_dataset",
    "default_coefficients",
    "default_two_class_spec",
    "PLANTED_TARGETS",
    "PLANTED_SOURCES",
]
