"""GP surrogates, expected improvement, and meta-surrogate transfer."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist, pdist
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import NumericalError

NOISE_RATIO = 1e-4
MIN_SIGNAL_VAR = 1e-6
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def median_length_scale(Xs) -> float:
    """Median pairwise distance among the distinct training inputs (1.0 if < 2)."""
    U = np.unique(np.asarray(Xs, dtype=float), axis=0)
    if U.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(U)))
    return med if med > 0 else 1.0


def rbf(A, B, signal_var, length_scale) -> np.ndarray:
    d2 = cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
    return signal_var * np.exp(-d2 / (2.0 * length_scale ** 2))


@dataclass
class GpModel:
    X: np.ndarray
    y: np.ndarray
    signal_var: float
    length_scale: float
    noise_var: float
    prior_mean: float
    chol: tuple = None
    alpha: np.ndarray = None

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict(self, Xq):
        """Posterior mean and std at each row of ``Xq``."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.dim:
            raise ValueError(f"encoding length {Xq.shape[1]} != {self.dim}")
        Ks = rbf(Xq, self.X, self.signal_var, self.length_scale)
        mean = self.prior_mean + Ks @ self.alpha
        L = self.chol[0]
        v = solve_triangular(L, Ks.T, lower=True)
        var = self.signal_var - np.sum(v * v, axis=0)
        return mean, np.sqrt(np.maximum(var, 0.0))

    def mean(self, Xq) -> np.ndarray:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.dim:
            raise ValueError(f"encoding length {Xq.shape[1]} != {self.dim}")
        return self.prior_mean + rbf(Xq, self.X, self.signal_var, self.length_scale) @ self.alpha

    def to_json(self):
        return {
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "signal_var": self.signal_var,
            "length_scale": self.length_scale,
            "noise_var": self.noise_var,
            "prior_mean": self.prior_mean,
        }

    @classmethod
    def from_json(cls, doc) -> "GpModel":
        m = cls(
            np.asarray(doc["X"], dtype=float),
            np.asarray(doc["y"], dtype=float),
            float(doc["signal_var"]),
            float(doc["length_scale"]),
            float(doc["noise_var"]),
            float(doc["prior_mean"]),
        )
        return _factorize(m, retry=False)


def _factorize(m: GpModel, retry: bool = True) -> GpModel:
    K = rbf(m.X, m.X, m.signal_var, m.length_scale)
    n = K.shape[0]
    try:
        c = cho_factor(K + m.noise_var * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        if not retry:
            raise NumericalError("GP kernel matrix is not positive definite") from None
        m.noise_var *= 10.0
        try:
            c = cho_factor(K + m.noise_var * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            raise NumericalError("GP kernel matrix is not positive definite after noise retry") from None
    m.chol = c
    m.alpha = cho_solve(c, m.y - m.prior_mean)
    return m


def gp_fit(Xs, ys) -> GpModel:
    """RBF-kernel GP with median-heuristic length scale and fixed noise ratio."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if Xs.shape[0] < 1 or Xs.shape[0] != ys.size:
        raise ValueError("need matching, non-empty inputs and targets")
    if not np.all(np.isfinite(ys)) or not np.all(np.isfinite(Xs)):
        raise NumericalError("non-finite GP training data")
    sf2 = max(float(np.var(ys)), MIN_SIGNAL_VAR)
    m = GpModel(Xs.copy(), ys.copy(), sf2, median_length_scale(Xs), NOISE_RATIO * sf2, float(ys.mean()))
    return _factorize(m)


def gp_predict(model: GpModel, x):
    """(mean, std) at a single encoding."""
    mu, sd = model.predict(np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(sd[0])


def expected_improvement(u, sigma, best):
    """Closed-form EI for maximization; zero where sigma is zero.

    Works elementwise on arrays; returns a float for scalar input.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise ValueError("sigma must be >= 0")
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    z = (u - best) / safe
    ei = safe * (z * ndtr(z) + _INV_SQRT_2PI * np.exp(-0.5 * z * z))
    ei = np.where(pos, np.maximum(ei, 0.0), 0.0)
    return float(ei) if ei.ndim == 0 else ei


def fit_meta_surrogates(P, grid_encodings) -> list:
    """One GP per meta-train dataset over (grid encoding, true AP)."""
    P = np.asarray(P, dtype=float)
    E = np.asarray(grid_encodings, dtype=float)
    if P.shape[1] != E.shape[0]:
        raise ValueError("PerfMatrix columns must match the grid encodings")
    return [gp_fit(E, row) for row in P]


def weighted_kendall(a, b) -> float:
    """Hyperbolically weighted Kendall tau.

    Pair (i, j) weighs 1/(r_i + 1) + 1/(r_j + 1), with r the 0-based
    descending average rank in ``a``. Concordant pairs add their weight,
    discordant pairs subtract it, pairs tied in ``b`` add nothing. The
    normalizer sums weights over pairs not tied in ``a``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("weighted_kendall needs two equal-length vectors")
    if a.size < 2:
        raise ValueError("weighted_kendall needs at least 2 items")
    r = rankdata(-a, method="average") - 1.0
    w = 1.0 / (r + 1.0)
    W = w[:, None] + w[None, :]
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(a.size, 1)
    Wp, sa, sb = W[iu], sa[iu], sb[iu]
    den = Wp[sa != 0].sum()
    if den == 0:
        return 0.0
    return float(np.clip((Wp * sa * sb).sum() / den, -1.0, 1.0))


def transfer_predict(s: GpModel, t: GpModel, w: float, X):
    """Surrogate mean shifted by ``w`` times the meta-surrogate mean.

    ``w`` is clamped to [0, 1]; the std comes from ``s`` alone.
    """
    if not math.isfinite(w):
        raise ValueError("transfer weight must be finite")
    w = min(max(w, 0.0), 1.0)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mu, sd = s.predict(X)
    if w > 0 and t is not None:
        mu = mu + w * t.mean(X)
    return mu, sd
