"""Local Outlier Factor and Isolation Forest, written against numpy.

Both return :class:`OutlierScores` where higher means more outlying.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import _rng
from .errors import ConfigError, DataError
from .hpspace import HpSetting, HpSpace, builtin_space

log = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649
LOF_METRICS = ("euclidean", "manhattan", "chebyshev", "minkowski", "cosine")
ALGORITHMS = ("LOF", "IFOREST")


@dataclass(frozen=True)
class OutlierScores:
    values: np.ndarray
    detector: str
    setting: Any = None

    def __len__(self):
        return len(self.values)


# --------------------------------------------------------------------- LOF

def pairwise_distances(X: np.ndarray, metric: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if metric == "euclidean":
        D = cdist(X, X, "euclidean")
    elif metric == "minkowski":
        D = cdist(X, X, "minkowski", p=2)
    elif metric == "manhattan":
        D = cdist(X, X, "cityblock")
    elif metric == "chebyshev":
        D = cdist(X, X, "chebyshev")
    elif metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        zero = norms == 0
        U = np.zeros_like(X)
        U[~zero] = X[~zero] / norms[~zero, None]
        D = np.clip(1.0 - U @ U.T, 0.0, 2.0)
        D[zero, :] = 1.0
        D[:, zero] = 1.0
    else:
        raise ConfigError(f"unknown LOF metric {metric!r}")
    np.fill_diagonal(D, 0.0)
    return D


def lof_from_distances(D: np.ndarray, k: int) -> np.ndarray:
    """LOF scores from a full distance matrix.

    Neighborhoods include every point tied at the k-distance. Distances are
    first divided by the largest finite one (LOF is scale-free), and mean
    reachabilities below 1e-10 of that scale are floored there: duplicate
    clusters score exactly 1 and every score stays finite, while all other
    points follow the textbook formula.
    """
    finite = D[np.isfinite(D)]
    if finite.size and finite.max() > 0:
        D = D / finite.max()
    Dn = D.copy()
    np.fill_diagonal(Dn, np.inf)
    kdist = np.partition(Dn, k - 1, axis=1)[:, k - 1]
    nbr = Dn <= kdist[:, None]
    reach = np.maximum(D, kdist[None, :])
    cnt = nbr.sum(axis=1)
    mean_reach = np.where(nbr, reach, 0.0).sum(axis=1) / cnt
    lrd = 1.0 / np.maximum(mean_reach, 1e-10)
    ratio_sum = np.where(nbr, lrd[None, :], 0.0).sum(axis=1)
    return ratio_sum / cnt / lrd


def lof_scores(X: np.ndarray, n_neighbors: int, metric: str = "euclidean", D: Optional[np.ndarray] = None) -> OutlierScores:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("LOF needs a non-empty 2-D matrix")
    n = X.shape[0]
    if n < 2:
        raise DataError("LOF needs at least 2 rows")
    k = int(n_neighbors)
    if k < 1:
        raise ConfigError("n_neighbors must be >= 1")
    if k >= n:
        log.warning("n_neighbors=%d >= n=%d; clamped to %d", k, n, n - 1)
        k = n - 1
    if D is None:
        D = pairwise_distances(X, metric)
    vals = lof_from_distances(D, k)
    return OutlierScores(vals, "LOF", {"n_neighbors": int(n_neighbors), "metric": metric})


# ----------------------------------------------------------------- iForest

def harmonic_approx(i) -> np.ndarray:
    return np.log(i) + EULER_GAMMA


def average_path_length(k) -> np.ndarray:
    """Average unsuccessful-search path length c(k) of a BST with k keys.

    c(k) = 2H(k-1) - 2(k-1)/k with H(i) ~ ln(i) + gamma; c(2) = 1 and
    c(k) = 0 for k <= 1 use the exact harmonic values.
    """
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    big = k > 2
    kb = k[big]
    out[big] = 2.0 * harmonic_approx(kb - 1.0) - 2.0 * (kb - 1.0) / kb
    out[k == 2] = 1.0
    return out


def _subsample_sizes(n, d, max_samples, max_features):
    if not (0 < max_samples <= 1) or not (0 < max_features <= 1):
        raise ConfigError("max_samples and max_features must be fractions in (0, 1]")
    psi = min(n, math.ceil(max_samples * n - 1e-9))
    q = min(d, math.ceil(max_features * d - 1e-9))
    if psi < 1 or q < 1:
        raise ConfigError("subsample or feature count rounds to 0")
    # a single-row tree has no defined normalizer c(1) = 0
    return max(psi, 2), q


def iforest_path_lengths(X, n_estimators, max_samples, max_features, seed) -> tuple:
    """Per-tree path lengths, shape (n_estimators, n), and the subsample size.

    All trees are grown together one depth level at a time. Each tree owns a
    generator seeded from (seed, tree index); per level it draws the split
    variables for its active nodes in heap order, so tree ``t`` is identical
    whatever the forest size.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        raise DataError("iForest needs at least 2 rows")
    T = int(math.ceil(n_estimators))
    if T < 1:
        raise ConfigError("n_estimators must be >= 1")
    psi, q = _subsample_sizes(n, d, max_samples, max_features)
    limit = int(math.ceil(math.log2(psi)))

    gens = [_rng.rng(seed, t) for t in range(T)]
    s_rows = np.empty((T, psi), dtype=np.int64)
    fmask = np.zeros((T, d), dtype=bool)
    for t, g in enumerate(gens):
        s_rows[t] = g.choice(n, size=psi, replace=False)
        fmask[t, g.choice(d, size=q, replace=False)] = True

    span = 1 << (limit + 1)
    # sample points (define the splits) and query points (all rows, scored)
    s_tree = np.repeat(np.arange(T), psi)
    s_row = s_rows.ravel()
    s_node = np.ones(T * psi, dtype=np.int64)
    q_tree = np.repeat(np.arange(T), n)
    q_row = np.tile(np.arange(n), T)
    q_node = np.ones(T * n, dtype=np.int64)
    paths = np.zeros(T * n)
    q_live = np.arange(T * n)
    s_live = np.arange(T * psi)

    for depth in range(limit + 1):
        if q_live.size == 0:
            break
        s_gid = s_tree[s_live] * span + s_node[s_live]
        order = np.argsort(s_gid, kind="stable")
        s_live = s_live[order]
        s_gid = s_gid[order]
        gids, starts, counts = np.unique(s_gid, return_index=True, return_counts=True)

        if depth < limit:
            cand = counts > 1
        else:
            cand = np.zeros(gids.size, dtype=bool)
        split_gid = np.empty(0, dtype=np.int64)
        if cand.any():
            Xs = X[s_row[s_live]]
            lo = np.minimum.reduceat(Xs, starts, axis=0)
            hi = np.maximum.reduceat(Xs, starts, axis=0)
            node_tree = gids // span
            nonconst = (hi > lo) & fmask[node_tree] & cand[:, None]
            k_avail = nonconst.sum(axis=1)
            splittable = k_avail > 0
            idx = np.flatnonzero(splittable)
            u = np.empty((idx.size, 2))
            # draw per tree, nodes already in heap order within a tree
            trees_here = node_tree[idx]
            bounds = np.flatnonzero(np.diff(trees_here)) + 1
            for block in np.split(np.arange(idx.size), bounds):
                if block.size:
                    u[block] = gens[trees_here[block[0]]].random((block.size, 2))
            pick = np.floor(u[:, 0] * k_avail[idx]).astype(np.int64)
            csum = np.cumsum(nonconst[idx], axis=1)
            attr = np.argmax(csum > pick[:, None], axis=1)
            lo_a = lo[idx, attr]
            hi_a = hi[idx, attr]
            thr = lo_a + u[:, 1] * (hi_a - lo_a)
            split_gid = gids[idx]

        # queries sitting at a node that is not split terminate here
        q_gid = q_tree[q_live] * span + q_node[q_live]
        pos = np.searchsorted(gids, q_gid)
        pos_c = np.minimum(pos, gids.size - 1)
        found = gids[pos_c] == q_gid
        size = np.where(found, counts[pos_c], 0)
        sp = np.searchsorted(split_gid, q_gid)
        sp_c = np.minimum(sp, max(split_gid.size - 1, 0))
        is_split = (split_gid.size > 0) & (split_gid[sp_c] == q_gid) if split_gid.size else np.zeros(q_gid.size, bool)
        done = ~is_split
        paths[q_live[done]] = depth + average_path_length(size[done])
        if split_gid.size == 0:
            q_live = q_live[~done]
            break

        go = q_live[is_split]
        j = sp_c[is_split]
        right = X[q_row[go], attr[j]] >= thr[j]
        q_node[go] = 2 * q_node[go] + right
        q_live = go

        s_gid2 = s_tree[s_live] * span + s_node[s_live]
        sp_s = np.searchsorted(split_gid, s_gid2)
        sp_sc = np.minimum(sp_s, split_gid.size - 1)
        s_split = split_gid[sp_sc] == s_gid2
        sl = s_live[s_split]
        js = sp_sc[s_split]
        right_s = X[s_row[sl], attr[js]] >= thr[js]
        s_node[sl] = 2 * s_node[sl] + right_s
        s_live = sl

    return paths.reshape(T, n), psi


def iforest_scores(X, n_estimators=100, max_samples=0.5, max_features=1.0, seed=0) -> OutlierScores:
    paths, psi = iforest_path_lengths(X, n_estimators, max_samples, max_features, seed)
    mean_path = paths.mean(axis=0)
    vals = np.power(2.0, -mean_path / average_path_length(psi))
    params = {
        "n_estimators": int(math.ceil(n_estimators)),
        "max_samples": float(max_samples),
        "max_features": float(max_features),
        "seed": int(seed),
    }
    return OutlierScores(vals, "IFOREST", params)


# -------------------------------------------------------------- interface

def _normalize_algorithm(algorithm: str) -> str:
    a = str(algorithm).upper().replace("-", "").replace("_", "")
    if a in ("IFOREST", "ISOLATIONFOREST"):
        return "IFOREST"
    if a == "LOF":
        return "LOF"
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def default_setting(algorithm: str, n_rows: Optional[int] = None, space: Optional[HpSpace] = None) -> HpSetting:
    """The library-default HP for ``algorithm`` as recorded in its manifest.

    An iForest ``max_samples`` of ``"auto"`` resolves to min(256/n, 1).
    """
    algo = _normalize_algorithm(algorithm)
    space = space or builtin_space(algo)
    doc = dict(space.defaults)
    if not doc:
        raise ConfigError(f"space for {algo} has no recorded defaults")
    if algo == "IFOREST" and doc.get("max_samples") == "auto":
        doc["max_samples"] = 1.0 if not n_rows else min(256.0 / n_rows, 1.0)
    return space.setting(doc)


@dataclass(frozen=True)
class DetectorSpec:
    algorithm: str
    space: HpSpace

    def __post_init__(self):
        object.__setattr__(self, "algorithm", _normalize_algorithm(self.algorithm))

    @classmethod
    def builtin(cls, algorithm: str) -> "DetectorSpec":
        algo = _normalize_algorithm(algorithm)
        return cls(algo, builtin_space(algo))

    def default_setting(self, n_rows: Optional[int] = None) -> HpSetting:
        return default_setting(self.algorithm, n_rows, self.space)

    @property
    def stochastic(self) -> bool:
        return self.algorithm == "IFOREST"

    def run(self, X: np.ndarray, setting: HpSetting, seed: int = 0) -> OutlierScores:
        """Score ``X`` (already standardized) with ``setting``.

        Stochastic detectors draw from a seed derived from ``seed`` and the
        setting itself, so a given (data, setting, seed) always scores alike.
        """
        p = setting.as_dict()
        if self.algorithm == "LOF":
            out = lof_scores(X, p["n_neighbors"], p["metric"])
        else:
            s = _rng.derive_seed(seed, setting.key())
            out = iforest_scores(X, p["n_estimators"], p["max_samples"], p["max_features"], s)
        return OutlierScores(out.values, self.algorithm, setting)
