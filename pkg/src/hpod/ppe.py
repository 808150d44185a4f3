"""Proxy performance evaluator: least-squares gradient-boosted regression trees.

Input rows are ``[HP encoding | meta-features | IPMs]``, the target is the
true average precision of that HP on that dataset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .errors import ConfigError

MIN_ROWS = 20
N_IPM = 3


@dataclass(frozen=True)
class PpeParams:
    trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.05
    row_subsample: float = 0.8
    min_leaf: int = 5
    seed: int = 0

    def to_json(self):
        return dict(self.__dict__)


@dataclass
class TrainTable:
    features: np.ndarray
    targets: np.ndarray
    dataset_idx: np.ndarray
    grid_idx: np.ndarray

    def __len__(self):
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]


def build_training_table(P, encodings, M, ipms) -> TrainTable:
    """Row (i, j) = [encodings[j] | M[i] | ipms[i, j]] -> P[i, j], ordered by (i, j)."""
    P = np.asarray(P, dtype=float)
    E = np.asarray(encodings, dtype=float)
    M = np.asarray(M, dtype=float)
    I = np.asarray(ipms, dtype=float)
    n, m = P.shape
    if E.shape[0] != m or M.shape[0] != n or I.shape[:2] != (n, m):
        raise ValueError(f"shape mismatch: P {P.shape}, encodings {E.shape}, M {M.shape}, ipms {I.shape}")
    if np.any((P < 0) | (P > 1)) or not np.all(np.isfinite(P)):
        raise ValueError("targets must lie in [0, 1]")
    ii, jj = np.divmod(np.arange(n * m), m)
    X = np.hstack([E[jj], M[ii], I.reshape(n * m, -1)])
    return TrainTable(X, P.reshape(-1).copy(), ii, jj)


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_json(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=float),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=float),
        )


def best_split(X, r, min_leaf):
    """Best least-squares split of residuals ``r`` over all features.

    Returns ``(feature, threshold, gain)`` or ``None``. Thresholds are
    midpoints between consecutive distinct values; among equal gains the
    lowest feature and then the lowest threshold win.
    """
    n, d = X.shape
    if n < 2 * min_leaf:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    Xs = np.take_along_axis(X, order, axis=0)
    rs = r[order]
    csum = np.cumsum(rs, axis=0)[:-1]
    total = r.sum()
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    # SSE reduction relative to the parent, up to the constant sum(r^2)
    gain = csum ** 2 / nl + (total - csum) ** 2 / nr - total ** 2 / n
    valid = Xs[1:] > Xs[:-1]
    k = np.arange(1, n)[:, None]
    valid &= (k >= min_leaf) & (n - k >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    # features ascending, then split position ascending (= threshold ascending)
    flat = np.argmax(gain.T.reshape(-1))
    f, pos = divmod(int(flat), n - 1)
    g = gain[pos, f]
    if not np.isfinite(g) or g <= 1e-12 * max(1.0, float(r @ r)):
        return None
    thr = 0.5 * (Xs[pos, f] + Xs[pos + 1, f])
    # guard against the midpoint rounding onto the upper value
    if not Xs[pos, f] <= thr < Xs[pos + 1, f]:
        thr = Xs[pos, f]
    return f, float(thr), float(g)


def fit_tree(X, r, max_depth, min_leaf) -> Tree:
    feat, thr, left, right, val = [], [], [], [], []

    def grow(rows, depth):
        node = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(float(r[rows].mean()))
        if depth >= max_depth:
            return node
        split = best_split(X[rows], r[rows], min_leaf)
        if split is None:
            return node
        f, t, _ = split
        go_left = X[rows, f] <= t
        feat[node] = f
        thr[node] = t
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return Tree(
        np.asarray(feat, dtype=np.int64),
        np.asarray(thr, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(val, dtype=float),
    )


@dataclass
class PpeModel:
    base: float
    learning_rate: float
    trees: list
    n_features: int
    params: PpeParams = field(default_factory=PpeParams)
    train_mse: float = float("nan")

    def raw_predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return np.clip(self.raw_predict(X), 0.0, 1.0)

    def to_json(self):
        return {
            "base": self.base,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "params": self.params.to_json(),
            "train_mse": self.train_mse,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            base=float(doc["base"]),
            learning_rate=float(doc["learning_rate"]),
            trees=[Tree.from_json(t) for t in doc["trees"]],
            n_features=int(doc["n_features"]),
            params=PpeParams(**doc["params"]),
            train_mse=float(doc["train_mse"]),
        )


def train_ppe(table: TrainTable, params: Optional[PpeParams] = None, stage_mse: Optional[list] = None) -> PpeModel:
    """Stagewise least-squares boosting.

    Each stage fits a depth-limited tree to the current residuals on a
    seed-determined row subsample. If ``stage_mse`` is a list, the training
    MSE after every stage is appended to it.
    """
    params = params or PpeParams()
    X = np.asarray(table.features, dtype=float)
    y = np.asarray(table.targets, dtype=float)
    n = X.shape[0]
    if n < MIN_ROWS:
        raise ConfigError(f"PPE needs at least {MIN_ROWS} rows, got {n}")
    if not (0 < params.row_subsample <= 1) or params.trees < 0 or params.max_depth < 0:
        raise ConfigError(f"invalid PPE parameters {params}")
    base = float(y.mean())
    pred = np.full(n, base)
    trees = []
    n_sub = max(1, int(round(params.row_subsample * n)))
    for t in range(params.trees):
        resid = y - pred
        if n_sub < n:
            rows = np.sort(_rng.rng(params.seed, "ppe", t).choice(n, size=n_sub, replace=False))
        else:
            rows = np.arange(n)
        tree = fit_tree(X[rows], resid[rows], params.max_depth, params.min_leaf)
        if tree.feature[0] < 0:
            # a lone root only carries the subsample's mean residual
            tree.value[0] = 0.0
        trees.append(tree)
        pred += params.learning_rate * tree.predict(X)
        if stage_mse is not None:
            stage_mse.append(float(np.mean((y - pred) ** 2)))
    mse = float(np.mean((y - pred) ** 2))
    return PpeModel(base, params.learning_rate, trees, X.shape[1], params, mse)


def ppe_features(encoding, meta_features, ipm) -> np.ndarray:
    mf = getattr(meta_features, "values", meta_features)
    return np.concatenate([np.asarray(encoding, float), np.asarray(mf, float), np.asarray(ipm, float)])


def ppe_predict(model: PpeModel, encoding, meta_features, ipm) -> float:
    """Predicted AP of one HP on a dataset, clamped to [0, 1]."""
    x = ppe_features(encoding, meta_features, ipm)
    return float(model.predict(x[None, :])[0])
