"""Ranking metrics and the paired signed-rank test used in benchmarking."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 25
Q_GRID = np.round(np.arange(1, 101) / 100.0, 2)


def average_precision(scores, labels) -> float:
    """Mean of precision@k over the ranks k holding a positive.

    Ranking is by score descending, ties broken by original index ascending.
    """
    s = np.asarray(getattr(scores, "values", scores), dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    npos = int(y.sum())
    if npos == 0 or npos == y.size:
        raise ValueError("average precision needs both classes")
    order = np.lexsort((np.arange(s.size), -s))
    hits = y[order]
    cum = np.cumsum(hits)
    ranks = np.arange(1, s.size + 1)
    return float(np.sum(hits * cum / ranks) / npos)


def normalized_ap_rank(ap: float, grid_aps) -> float:
    """Mid-rank position of ``ap`` within the grid APs: 1 best, 0 worst."""
    g = np.asarray(grid_aps, dtype=float)
    if g.size < 1:
        raise ValueError("empty grid")
    return float((np.sum(g < ap) + 0.5 * np.sum(g == ap)) / g.size)


def top_q(ap: float, grid_aps) -> float:
    """Smallest q in {0.01, ..., 1.00} such that at most q*m grid APs beat ``ap``.

    Equivalently ``ap`` reaches the (floor(q*m) + 1)-th largest grid AP.
    """
    g = np.asarray(grid_aps, dtype=float)
    m = g.size
    if m < 1:
        raise ValueError("empty grid")
    better = int(np.sum(g > ap))
    for q in Q_GRID:
        if better <= q * m + 1e-9:
            return float(q)
    return 1.0


def _exact_null_counts(ranks2):
    """Counts of each achievable doubled positive-rank sum under random signs.

    Ranks are doubled so average ranks (x.5) become integers.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y, alternative: str = "two-sided") -> float:
    """Paired Wilcoxon signed-rank p-value.

    Zero differences are dropped. Uses the exact sign-flip distribution
    (with average ranks for ties) when at most 25 differences remain, and a
    tie- and continuity-corrected normal approximation beyond that.
    ``alternative`` is "two-sided", "greater" (x tends to exceed y) or "less".
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero")
    r = rankdata(np.abs(d), method="average")
    t_plus = float(r[d > 0].sum())
    if n <= EXACT_MAX_N:
        r2 = np.rint(2 * r).astype(int)
        counts = _exact_null_counts(r2)
        total = 2 ** n
        t2 = int(round(2 * t_plus))
        upper = sum(counts[t2:]) / total
        lower = sum(counts[: t2 + 1]) / total
        if alternative == "greater":
            p = upper
        elif alternative == "less":
            p = lower
        else:
            p = min(1.0, 2 * min(upper, lower))
        return float(p)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(r, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    sd = math.sqrt(var)
    if alternative == "greater":
        p = norm.sf((t_plus - mean - 0.5) / sd)
    elif alternative == "less":
        p = norm.cdf((t_plus - mean + 0.5) / sd)
    else:
        z = (abs(t_plus - mean) - 0.5) / sd
        p = 2 * norm.sf(max(z, 0.0))
    return float(min(1.0, p))
