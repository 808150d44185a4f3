"""Tabular outlier-detection datasets and the labeled meta-train corpus."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    name: str
    X: np.ndarray
    y: Optional[np.ndarray] = None
    source: str = ""
    n_dropped: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
            raise DataError(f"{self.name}: need at least 2 rows and 1 column, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError(f"{self.name}: feature matrix contains NaN/Inf")
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape != (X.shape[0],):
                raise DataError(f"{self.name}: label vector length {y.shape} != {X.shape[0]} rows")
            if not np.all((y == 0) | (y == 1)):
                raise DataError(f"{self.name}: labels must be 0/1")
            object.__setattr__(self, "y", y.astype(np.int8))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    @property
    def outlier_rate(self) -> float:
        if self.y is None:
            return float("nan")
        return float(self.y.mean())

    def has_both_classes(self) -> bool:
        return self.y is not None and 0 < int(self.y.sum()) < self.n


@dataclass(frozen=True)
class Corpus:
    datasets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ds = tuple(self.datasets)
        names = [d.name for d in ds]
        if len(set(names)) != len(names):
            raise DataError(f"corpus dataset names must be unique: {names}")
        for d in ds:
            if not d.labeled:
                raise DataError(f"corpus dataset {d.name} has no labels")
        object.__setattr__(self, "datasets", ds)

    def __len__(self):
        return len(self.datasets)

    def __iter__(self):
        return iter(self.datasets)

    def __getitem__(self, i):
        return self.datasets[i]

    @property
    def names(self):
        return [d.name for d in self.datasets]

    def without(self, i: int) -> "Corpus":
        return Corpus(self.datasets[:i] + self.datasets[i + 1:])


def _parse_label(raw: str, path, line_no) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise DataError(f"{path}:{line_no}: label {raw!r} is not numeric") from None
    if math.isnan(v):
        return v
    if v not in (0.0, 1.0):
        raise DataError(f"{path}:{line_no}: label {raw!r} is not 0/1")
    return v


def load_dataset(path, label_column: Optional[str] = "outlier", name: Optional[str] = None) -> Dataset:
    """Read a header-bearing numeric CSV.

    Rows with a missing or non-finite feature are dropped (never imputed);
    the number of dropped rows is logged and kept on ``Dataset.n_dropped``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        lab_idx = header.index(label_column) if label_column is not None else None
        feat_idx = [k for k in range(len(header)) if k != lab_idx]
        if not feat_idx:
            raise DataError(f"{path}: no feature columns")
        rows, labels = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for k in feat_idx:
                cell = rec[k].strip()
                if cell == "":
                    vals.append(float("nan"))
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}:{line_no}: non-numeric value {cell!r} in column {header[k]!r}") from None
            rows.append(vals)
            if lab_idx is not None:
                labels.append(_parse_label(rec[lab_idx].strip(), path, line_no))

    X = np.asarray(rows, dtype=float).reshape(len(rows), len(feat_idx))
    keep = np.all(np.isfinite(X), axis=1)
    y = None
    if lab_idx is not None:
        y = np.asarray(labels, dtype=float)
        keep &= np.isfinite(y)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values", path.name, dropped)
    if not keep.any():
        raise DataError(f"{path}: no rows left after dropping missing values")
    X = X[keep]
    if y is not None:
        y = y[keep].astype(np.int8)
    return Dataset(name=name or path.stem, X=X, y=y, source=str(path), n_dropped=dropped)


def standardize(ds: Dataset) -> Dataset:
    """Z-score each column with the population std; constant columns become 0."""
    return replace(ds, X=standardize_matrix(ds.X))


def standardize_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Z = np.zeros_like(X)
    # rounding in the mean can leave a constant column with sd ~ 1e-17
    scale = np.maximum(1.0, np.abs(X).max(axis=0)) if X.size else 1.0
    ok = sd > 1e-12 * scale
    Z[:, ok] = (X[:, ok] - mu[ok]) / sd[ok]
    return Z


def load_corpus(directory, label_column: str = "outlier") -> Corpus:
    """Load every ``*.csv`` in ``directory``, ordered by dataset name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"corpus directory not found: {directory}")
    files = sorted(directory.glob("*.csv"), key=lambda p: p.stem)
    if not files:
        raise DataError(f"no CSV files in {directory}")
    return Corpus(tuple(load_dataset(f, label_column) for f in files))
