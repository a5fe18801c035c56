"""Subject loading, quality control, normalization, and lag splitting.

File formats (documented for interoperability with ABIDE-style ROI exports):

* subject file: delimited text (comma or whitespace), T rows x N columns,
  optional single header row (detected by a non-numeric first row);
* phenotype file: CSV with columns SUB_ID, DX_GROUP (1 = ASD -> label 1,
  2 = control -> label 0) and a mean-FD column (default ``func_mean_fd``);
* manifest file: CSV mapping subject_id -> time-series file path, relative
  paths resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ShapeError

DEGENERATE_VARIANCE = 1e-12


@dataclass
class RoiTimeSeries:
    """One subject's N-channel signal matrix plus label and QC metadata."""

    subject_id: str
    label: int  # 1 = ASD, 0 = control
    mean_fd: float  # millimeters; NaN when the phenotype row lacked it
    x: np.ndarray  # N x T

    @property
    def n_channels(self) -> int:
        return self.x.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.x.shape[1]


@dataclass
class LagPair:
    """Input/target matrices offset by ``lag`` columns of the same source."""

    input: np.ndarray  # N x (T - lag), columns 0 .. T-lag-1
    target: np.ndarray  # N x (T - lag), columns lag .. T-1
    lag: int


@dataclass
class Dataset:
    subjects: list[RoiTimeSeries]
    atlas_labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        widths = {s.n_channels for s in self.subjects}
        if len(widths) > 1:
            raise ShapeError(f"subjects disagree on channel count: {sorted(widths)}")
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject_id in dataset")

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def n_channels(self) -> int:
        return self.subjects[0].n_channels if self.subjects else 0

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=int)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.subjects[i] for i in indices], list(self.atlas_labels))


def _tokenize(line: str) -> list[str]:
    stripped = line.strip()
    if "," in stripped:
        return [tok.strip() for tok in stripped.split(",")]
    return stripped.split()


def _is_numeric_row(tokens: list[str]) -> bool:
    try:
        for tok in tokens:
            float(tok)
    except ValueError:
        return False
    return len(tokens) > 0


def load_subject(path, n_expected: int) -> np.ndarray:
    """Read a T x N delimited text matrix and return it transposed as N x T."""
    path = Path(path)
    rows: list[list[float]] = []
    with path.open() as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: file is empty")
    start = 0
    if not _is_numeric_row(_tokenize(lines[0])):
        start = 1
        if len(lines) == 1:
            raise FormatError(f"{path}: header row but no data")
    width = None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        tokens = _tokenize(line)
        if not _is_numeric_row(tokens):
            raise FormatError(f"{path}:{lineno}: non-numeric entry")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise FormatError(f"{path}:{lineno}: ragged row ({len(tokens)} vs {width} columns)")
        rows.append([float(tok) for tok in tokens])
    if width != n_expected:
        raise ShapeError(f"{path}: {width} columns, expected {n_expected}")
    x = np.asarray(rows, dtype=np.float64).T
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite entry in time series")
    return x


def write_subject(x: np.ndarray, path) -> None:
    """Write an N x T matrix as T rows x N comma-separated columns.

    Values are emitted at 17 significant digits so load_subject round-trips
    float64 exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    with Path(path).open("w") as fh:
        for col in x.T:
            fh.write(",".join(f"{v:.17g}" for v in col))
            fh.write("\n")


def qc_filter(dataset: Dataset, fd_threshold: float) -> Dataset:
    """Retain subjects whose mean FD does not exceed the threshold.

    The boundary is inclusive: only subjects strictly above the threshold are
    excluded.  Original order is preserved.
    """
    missing = [s.subject_id for s in dataset.subjects if math.isnan(s.mean_fd)]
    if missing:
        raise DataError(f"mean FD missing for subjects: {', '.join(missing)}")
    kept = [s for s in dataset.subjects if s.mean_fd <= fd_threshold]
    return Dataset(kept, list(dataset.atlas_labels))


def normalize(x: np.ndarray) -> np.ndarray:
    """Z-score each channel over the full sequence (population variance).

    Channels with variance below 1e-12 are zeroed out and reported via a
    warning; they carry no usable signal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] < 2:
        raise ShapeError(f"normalize needs T >= 2, got {x.shape[1]}")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    degenerate = var.ravel() < DEGENERATE_VARIANCE
    out = np.zeros_like(x)
    ok = ~degenerate
    out[ok] = (x[ok] - mean[ok]) / np.sqrt(var[ok])
    if degenerate.any():
        channels = np.flatnonzero(degenerate).tolist()
        warnings.warn(f"degenerate channels zeroed during normalization: {channels}")
    return out


def lag_split(x: np.ndarray, lag: int) -> LagPair:
    """Split into input (columns 0..T-lag-1) and target (columns lag..T-1)."""
    x = np.asarray(x, dtype=np.float64)
    t_len = x.shape[1]
    if lag < 1:
        raise ShapeError(f"lag must be >= 1, got {lag}")
    if lag >= t_len:
        raise ShapeError(f"lag {lag} leaves no target columns for T={t_len}")
    return LagPair(input=x[:, : t_len - lag].copy(), target=x[:, lag:].copy(), lag=lag)


def load_manifest(path) -> list[tuple[str, Path]]:
    path = Path(path)
    entries: list[tuple[str, Path]] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "subject_id" not in reader.fieldnames or "path" not in reader.fieldnames:
            raise FormatError(f"{path}: manifest needs subject_id and path columns")
        for row in reader:
            p = Path(row["path"])
            if not p.is_absolute():
                p = path.parent / p
            entries.append((row["subject_id"], p))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def load_phenotype(path, fd_column: str = "func_mean_fd") -> dict[str, tuple[int, float]]:
    """Map subject_id -> (label, mean_fd) from an ABIDE-style phenotype CSV."""
    path = Path(path)
    table: dict[str, tuple[int, float]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("SUB_ID", "DX_GROUP"):
            if col not in fields:
                raise FormatError(f"{path}: phenotype needs column {col}")
        if fd_column not in fields:
            raise FormatError(f"{path}: phenotype needs mean-FD column {fd_column!r}")
        for row in reader:
            sub_id = row["SUB_ID"].strip()
            dx = row["DX_GROUP"].strip()
            if dx not in ("1", "2"):
                raise DataError(f"{path}: DX_GROUP must be 1 (ASD) or 2 (control), got {dx!r}")
            fd_text = row[fd_column].strip()
            fd = float(fd_text) if fd_text else math.nan
            table[sub_id] = (1 if dx == "1" else 0, fd)
    if not table:
        raise DataError(f"{path}: empty phenotype table")
    return table


def load_dataset(
    manifest_path,
    phenotype_path,
    n_expected: int,
    atlas_labels: list[str] | None = None,
    fd_column: str = "func_mean_fd",
) -> Dataset:
    """Join a manifest with a phenotype table and load every subject file."""
    manifest = load_manifest(manifest_path)
    phenotype = load_phenotype(phenotype_path, fd_column=fd_column)
    subjects = []
    for subject_id, file_path in manifest:
        if subject_id not in phenotype:
            raise DataError(f"subject {subject_id} missing from phenotype table")
        label, fd = phenotype[subject_id]
        x = load_subject(file_path, n_expected)
        subjects.append(RoiTimeSeries(subject_id=subject_id, label=label, mean_fd=fd, x=x))
    labels = atlas_labels or [f"roi_{i:03d}" for i in range(n_expected)]
    if len(labels) != n_expected:
        raise ShapeError(f"{len(labels)} atlas labels for {n_expected} channels")
    return Dataset(subjects, list(labels))


def prepared_pair(subject: RoiTimeSeries, lag: int) -> LagPair:
    """Normalize a subject then lag-split it; the standard model input."""
    return lag_split(normalize(subject.x), lag)


__all__ = [
    "RoiTimeSeries",
    "LagPair",
    "Dataset",
    "load_subject",
    "write_subject",
    "qc_filter",
    "normalize",
    "lag_split",
    "load_manifest",
    "load_phenotype",
    "load_dataset",
    "prepared_pair",
]
