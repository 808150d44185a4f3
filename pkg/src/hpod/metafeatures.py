"""Fixed-length dataset descriptors and the distance used to match datasets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .data import standardize_matrix
from .detectors import iforest_scores
from .errors import ConfigError, DataError

SCHEMA_VERSION = "mf-31.v1"
N_FEATURES = 31
MAX_CORR_PAIRS = 50
LANDMARK_TREES = 50

FEATURE_NAMES = (
    ["log10_n", "log10_d", "d_over_n"]
    + [f"{stat}_{agg}" for stat in ("col_mean", "col_std", "col_skew", "col_kurt") for agg in ("mean", "std", "min", "max")]
    + ["abs_corr_mean", "abs_corr_max", "iqr_out_mean", "iqr_out_max", "pca_ev1", "pca_ev2", "pca_ev3"]
    + ["lm_mean", "lm_std", "lm_skew", "lm_p90_over_median", "lm_max_over_median"]
)


@dataclass(frozen=True)
class MetaFeatureVector:
    values: np.ndarray
    schema: str = SCHEMA_VERSION

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_FEATURES,):
            raise ValueError(f"meta-feature vector must have length {N_FEATURES}")
        object.__setattr__(self, "values", v)


def _moments(X):
    """Per-column mean, std, skewness and excess kurtosis (0 where undefined)."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    Z = X - mu
    m2 = (Z ** 2).mean(axis=0)
    m3 = (Z ** 3).mean(axis=0)
    m4 = (Z ** 4).mean(axis=0)
    tiny = m2 <= 1e-24 * np.maximum(1.0, mu ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = np.where(tiny, 0.0, m3 / m2 ** 1.5)
        kurt = np.where(tiny, 0.0, m4 / m2 ** 2 - 3.0)
    return mu, sd, skew, kurt


def _agg4(v):
    return [v.mean(), v.std(), v.min(), v.max()]


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def _correlations(X, seed):
    d = X.shape[1]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    if not pairs:
        return [0.0, 0.0]
    if len(pairs) > MAX_CORR_PAIRS:
        pick = _rng.rng(seed, "mf-corr").choice(len(pairs), size=MAX_CORR_PAIRS, replace=False)
        pairs = [pairs[k] for k in sorted(pick)]
    r = np.abs([_pearson(X[:, i], X[:, j]) for i, j in pairs])
    return [r.mean(), r.max()]


def _iqr_outliers(X):
    q1, q3 = np.percentile(X, [25, 75], axis=0)
    iqr = q3 - q1
    out = ((X < q1 - 1.5 * iqr) | (X > q3 + 1.5 * iqr)).mean(axis=0)
    return [out.mean(), out.max()]


def _pca_ratios(X):
    Z = standardize_matrix(X)
    cov = Z.T @ Z / Z.shape[0]
    ev = np.sort(np.clip(np.linalg.eigvalsh(cov), 0.0, None))[::-1]
    total = ev.sum()
    ratios = ev / total if total > 0 else np.zeros_like(ev)
    top = np.zeros(3)
    top[: min(3, ratios.size)] = ratios[:3]
    return list(top)


def _landmarker(X, seed):
    # canonical row order, so the subsampling inside the forest ignores input order
    Z = standardize_matrix(X)
    Z = Z[np.lexsort(Z.T[::-1])]
    s = iforest_scores(Z, LANDMARK_TREES, 0.5, 1.0, _rng.derive_seed(seed, "mf-landmark")).values
    mu, sd = s.mean(), s.std()
    skew = ((s - mu) ** 3).mean() / sd ** 3 if sd > 0 else 0.0
    med = np.median(s)
    if med > 0:
        return [mu, sd, skew, np.percentile(s, 90) / med, s.max() / med]
    return [mu, sd, skew, 0.0, 0.0]


def extract(X, seed: int = 0) -> MetaFeatureVector:
    """31 meta-features of a raw (unstandardized) feature matrix.

    Order: size (3), column-moment aggregates (16), correlation (2),
    IQR outlier fractions (2), PCA spectrum (3), iForest landmarker (5).
    Undefined statistics are reported as 0.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise DataError("meta-features need at least 2 rows and 1 column")
    n, d = X.shape
    feats = [np.log10(n), np.log10(d), d / n]
    for stat in _moments(X):
        feats += _agg4(stat)
    feats += _correlations(X, seed)
    feats += _iqr_outliers(X)
    feats += _pca_ratios(X)
    feats += _landmarker(X, seed)
    v = np.nan_to_num(np.asarray(feats, dtype=float), nan=0.0, posinf=0.0, neginf=0.0)
    return MetaFeatureVector(v)


@dataclass(frozen=True)
class MfScaler:
    """Per-dimension location/scale fitted on the meta-train feature matrix."""

    mean: np.ndarray
    std: np.ndarray
    schema: str = SCHEMA_VERSION

    @classmethod
    def fit(cls, M) -> "MfScaler":
        M = np.asarray(M, dtype=float)
        return cls(M.mean(axis=0), M.std(axis=0))

    @property
    def active(self) -> np.ndarray:
        return self.std > 1e-12

    def transform(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a = self.active
        return (v[..., a] - self.mean[a]) / self.std[a]

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "schema": self.schema}

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["std"], dtype=float), doc["schema"])


def _values(v):
    if isinstance(v, MetaFeatureVector):
        return v.schema, v.values
    return SCHEMA_VERSION, np.asarray(v, dtype=float)


def mf_distance(a, b, scaler: MfScaler) -> float:
    """Euclidean distance after z-scoring with meta-train statistics.

    Dimensions with zero spread on the meta-train set are ignored.
    """
    sa, va = _values(a)
    sb, vb = _values(b)
    if sa != sb or sa != scaler.schema:
        raise ConfigError(f"meta-feature schema mismatch: {sa} / {sb} / {scaler.schema}")
    diff = scaler.transform(va) - scaler.transform(vb)
    return float(np.sqrt(diff @ diff))


def nearest_dataset(m_test, M, scaler: MfScaler) -> int:
    """Index of the meta-train row closest to ``m_test`` (lowest index on ties)."""
    dists = [mf_distance(m_test, row, scaler) for row in np.asarray(M)]
    return int(np.argmin(dists))
