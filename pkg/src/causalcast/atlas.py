"""Region labels for the 116-parcel anatomical atlas, user-overridable."""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

from .errors import FormatError, ShapeError

ATLAS_SIZE = 116


def _parse_labels(lines) -> list[str]:
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or "index" not in reader.fieldnames or "name" not in reader.fieldnames:
        raise FormatError("atlas label file needs index and name columns")
    rows = [(int(r["index"]), r["name"].strip()) for r in reader]
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise FormatError("atlas label indices must be 0..N-1 without gaps")
    return [name for _, name in rows]


def load_atlas_labels(path=None, n: int | None = None) -> list[str]:
    """Labels from a CSV file, the bundled 116-region default, or generics.

    With no path: the packaged atlas when n is 116 (or unspecified),
    otherwise generated ``roi_###`` names.
    """
    if path is not None:
        with Path(path).open(newline="") as fh:
            labels = _parse_labels(fh)
    elif n is None or n == ATLAS_SIZE:
        text = resources.files("causalcast").joinpath("assets/aal116.csv").read_text()
        labels = _parse_labels(text.splitlines())
    else:
        labels = [f"roi_{i:03d}" for i in range(n)]
    if n is not None and len(labels) != n:
        raise ShapeError(f"{len(labels)} atlas labels for {n} channels")
    return labels


__all__ = ["ATLAS_SIZE", "load_atlas_labels"]
