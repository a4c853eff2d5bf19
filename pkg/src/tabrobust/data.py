"""Tabular dataset ingestion, z-score standardization and seeded splitting.

Randomness never touches global state: every function that shuffles or samples
takes an integer seed and builds its own ``numpy.random.Generator`` on a
``PCG64`` bit generator (see :func:`make_rng`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "RawDataset",
    "Normalizer",
    "Dataset",
    "make_rng",
    "fisher_yates",
    "load_csv",
    "write_csv",
    "fit_normalizer",
    "apply_normalizer",
    "split",
    "synth_gaussian",
]


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


def make_rng(seed, *extra: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` (optionally mixed with stream ids)."""
    if extra:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, extra)])))
    return np.random.Generator(np.random.PCG64(int(seed)))


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Durstenfeld shuffle of ``arange(n)``; one bounded integer draw per swap."""
    idx = np.arange(n)
    if n < 2:
        return idx
    draws = rng.integers(0, np.arange(n, 1, -1))  # draws[k] in [0, n-k)
    for k, i in enumerate(range(n - 1, 0, -1)):
        j = draws[k]
        idx[i], idx[j] = idx[j], idx[i]
    return idx


@dataclass
class RawDataset:
    """Unscaled features with dense integer labels.

    ``classes[k]`` is the original label string that maps to class index ``k``.
    """

    rows: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    label_name: str = "label"
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            raise DataError(f"rows must be a 2-D matrix, got shape {self.rows.shape}")
        if self.rows.shape[0] != self.labels.shape[0]:
            raise DataError("rows and labels disagree on sample count")
        if len(self.feature_names) != self.rows.shape[1]:
            raise DataError("feature_names length does not match column count")
        if not np.all(np.isfinite(self.rows)):
            raise DataError("non-finite feature values")
        if not self.classes:
            n_cls = int(self.labels.max()) + 1 if self.labels.size else 0
            self.classes = [str(k) for k in range(n_cls)]

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def take(self, idx) -> "RawDataset":
        return RawDataset(self.rows[idx], self.labels[idx], list(self.feature_names),
                          self.label_name, list(self.classes))


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass
class Dataset:
    """Standardized features ready for the model."""

    x: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise DataError("x must be n x d with one label per row")
        if not np.all(np.isfinite(self.x)):
            raise DataError("non-finite standardized values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_classes(self) -> int:
        return max(len(self.classes), int(self.y.max()) + 1 if self.y.size else 0)

    def take(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], list(self.feature_names), list(self.classes))


def load_csv(path, label_column: str) -> RawDataset:
    """Read a headed numeric CSV; labels are mapped to 0..C-1 in first-seen order."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        li = header.index(label_column)
        feat_cols = [j for j in range(len(header)) if j != li]
        if not feat_cols:
            raise DataError(f"{path}: no feature columns")
        names = [header[j] for j in feat_cols]

        rows, labels, mapping = [], [], {}
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for j in feat_cols:
                cell = rec[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column {header[j]!r}: non-numeric value {cell!r}")
                vals.append(v)
            lab = rec[li].strip()
            labels.append(mapping.setdefault(lab, len(mapping)))
            rows.append(vals)

    if not rows:
        raise DataError(f"{path}: no data rows")
    if len(mapping) < 2:
        raise DataError(f"{path}: need at least 2 distinct labels, found {len(mapping)}")
    return RawDataset(np.array(rows, dtype=np.float64), np.array(labels), names,
                      label_column, list(mapping))


def write_csv(data: RawDataset, path) -> None:
    """Write ``data`` back out; values at 12 significant digits, original label strings."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.feature_names, data.label_name])
        for row, lab in zip(data.rows, data.labels):
            w.writerow([format(v, ".12g") for v in row] + [data.classes[lab]])


def fit_normalizer(train: RawDataset) -> Normalizer:
    """Column means and population stds; zero-variance columns get std 1."""
    if train.n == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    mean = train.rows.mean(axis=0)
    std = train.rows.std(axis=0)
    std[std == 0] = 1.0
    return Normalizer(mean, std)


def apply_normalizer(norm: Normalizer, data: RawDataset) -> Dataset:
    if data.d != norm.mean.shape[0]:
        raise DataError(f"normalizer fitted on {norm.mean.shape[0]} features, data has {data.d}")
    x = (data.rows - norm.mean) / norm.std
    return Dataset(x, data.labels.copy(), list(data.feature_names), list(data.classes))


def split(data: RawDataset, train_fraction: float = 0.8, seed: int = 0):
    """Shuffled (train, test) partition; the train part has floor(n * fraction) rows."""
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if data.n < 2:
        raise DataError("need at least 2 samples to split")
    perm = fisher_yates(data.n, make_rng(seed))
    n_train = math.floor(data.n * train_fraction)
    return data.take(perm[:n_train]), data.take(perm[n_train:])


def synth_gaussian(n: int, d: int, separation: float, seed: int = 0) -> RawDataset:
    """Two balanced classes drawn from N(-s/2 * 1, I) and N(+s/2 * 1, I).

    Class 0 gets ``ceil(n / 2)`` samples. Rows are returned shuffled.
    """
    if n < 2 or d < 1 or separation < 0:
        raise DataError(f"invalid synth_gaussian sizes n={n}, d={d}, separation={separation}")
    rng = make_rng(seed)
    labels = np.repeat([0, 1], [n - n // 2, n // 2])
    centers = np.where(labels == 1, 0.5, -0.5)[:, None] * separation
    rows = centers + rng.standard_normal((n, d))
    perm = fisher_yates(n, rng)
    return RawDataset(rows[perm], labels[perm], [f"x{j}" for j in range(d)], "label", ["0", "1"])
