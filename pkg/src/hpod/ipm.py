"""Label-free internal performance measures (IPMs) against an anchor consensus.

Every measure consumes rank-normalized score vectors, so all three are
invariant to strictly monotone transforms of a detector's raw scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata, spearmanr

from .errors import ConfigError

HITS_TOL = 1e-9
HITS_MAX_ITER = 100
ANCHOR_MAX = 10
ANCHOR_MIN_GAIN = 1e-4


def rank_normalize(scores) -> np.ndarray:
    """(average rank - 1) / (n - 1), ascending; a length-1 input maps to [0]."""
    v = np.asarray(getattr(scores, "values", scores), dtype=float)
    if v.size == 0:
        raise ValueError("empty score vector")
    if v.size == 1:
        return np.zeros(1)
    return (rankdata(v, method="average") - 1.0) / (v.size - 1.0)


def pearson(a, b) -> float:
    """Pearson correlation, 0 when either side has no variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if den <= 0:
        return 0.0
    return float(np.clip(a @ b / den, -1.0, 1.0))


def _check(candidate, anchors):
    c = np.asarray(candidate, dtype=float)
    A = np.atleast_2d(np.asarray(anchors, dtype=float))
    if A.shape[0] == 0:
        raise ValueError("need at least one anchor")
    if A.shape[1] != c.size:
        raise ValueError(f"length mismatch: candidate {c.size}, anchors {A.shape[1]}")
    return c, A


def mc(candidate, anchors) -> float:
    """Mean correlation of the candidate with each anchor."""
    c, A = _check(candidate, anchors)
    return float(np.mean([pearson(c, a) for a in A]))


def select(candidate, anchors) -> float:
    """Correlation with a consensus refined by dropping weakly agreeing anchors."""
    c, A = _check(candidate, anchors)
    consensus = A.mean(axis=0)
    agree = np.array([pearson(a, consensus) for a in A])
    kept = A[agree >= np.median(agree)]
    return pearson(c, kept.mean(axis=0))


def hits_hubs(S, tol=HITS_TOL, max_iter=HITS_MAX_ITER):
    """Hub weights of the models (rows) of a non-negative model x point matrix.

    Returns ``(hubs, converged)``.
    """
    S = np.asarray(S, dtype=float)
    h = np.full(S.shape[0], 1.0 / np.sqrt(S.shape[0]))
    for _ in range(max_iter):
        a = S.T @ h
        na = np.linalg.norm(a)
        if na == 0:
            return np.zeros_like(h), True
        a /= na
        h_new = S @ a
        nh = np.linalg.norm(h_new)
        if nh == 0:
            return np.zeros_like(h), True
        h_new /= nh
        delta = np.max(np.abs(h_new - h))
        h = h_new
        if delta < tol:
            return h, True
    return h, False


def hits(candidate, anchors) -> float:
    """Candidate's hub weight relative to the strongest model (top model is 1)."""
    c, A = _check(candidate, anchors)
    h, _ = hits_hubs(np.vstack([c, A]))
    top = h.max()
    if top <= 0:
        return 1.0
    return float(np.clip(h[0] / top, 0.0, 1.0))


def extract_ipms(candidate_scores, anchor_vectors) -> np.ndarray:
    """[mc, select, hits] of a candidate against this dataset's anchor vectors."""
    c = rank_normalize(candidate_scores)
    return np.array([mc(c, anchor_vectors), select(c, anchor_vectors), hits(c, anchor_vectors)])


def correlation_matrix(R) -> np.ndarray:
    """Pairwise Pearson correlations between rows of R (0 for constant rows)."""
    R = np.asarray(R, dtype=float)
    Z = R - R.mean(axis=1, keepdims=True)
    norms = np.sqrt((Z * Z).sum(axis=1))
    ok = norms > 0
    Z[ok] /= norms[ok, None]
    Z[~ok] = 0.0
    return np.clip(Z @ Z.T, -1.0, 1.0)


@dataclass(frozen=True)
class AnchorSet:
    indices: tuple
    settings: tuple
    objective_trace: tuple = field(default=())

    def __len__(self):
        return len(self.indices)


def _spearman(a, b) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(spearmanr(a, b)[0])


def anchor_objective(corr_mats, P, anchor_idx) -> float:
    """Mean over datasets of Spearman(MC of every grid model, its true AP)."""
    vals = []
    for C, perf in zip(corr_mats, P):
        mc_vals = C[:, list(anchor_idx)].mean(axis=1)
        vals.append(_spearman(mc_vals, perf))
    return float(np.mean(vals))


def build_anchor_set(P, grid_ranked, grid_settings=None, max_size: int = ANCHOR_MAX, min_gain: float = ANCHOR_MIN_GAIN) -> AnchorSet:
    """Greedy forward selection of anchor models.

    ``grid_ranked[i]`` is the (m x n_i) matrix of rank-normalized scores of
    every grid model on meta-train dataset i. Each step adds the grid model
    whose inclusion maximizes :func:`anchor_objective`; ties go to the lowest
    grid index. Selection stops at ``max_size`` or when the gain drops below
    ``min_gain``.
    """
    P = np.asarray(P, dtype=float)
    n, m = P.shape
    if m == 0:
        raise ConfigError("empty grid")
    if len(grid_ranked) != n:
        raise ValueError("one score matrix per meta-train dataset required")
    corr = [correlation_matrix(R) for R in grid_ranked]
    chosen: list = []
    trace: list = []
    best_prev = -np.inf
    while len(chosen) < max_size:
        best_j, best_val = None, -np.inf
        for j in range(m):
            if j in chosen:
                continue
            val = anchor_objective(corr, P, chosen + [j])
            if val > best_val:
                best_j, best_val = j, val
        if best_j is None:
            break
        if chosen and best_val - best_prev < min_gain:
            break
        chosen.append(best_j)
        trace.append(best_val)
        best_prev = best_val
    settings = tuple(grid_settings[j] for j in chosen) if grid_settings is not None else ()
    return AnchorSet(tuple(chosen), settings, tuple(trace))
