import numpy as np
import pytest

from hpod.data import Corpus, Dataset


def planted_dataset(name, seed, n=80, d=4, n_out=6):
    """Gaussian inliers plus a few points pushed far out along random directions."""
    rs = np.random.default_rng(seed)
    X = rs.normal(size=(n, d)) * rs.uniform(0.5, 2.0, size=d)
    y = np.zeros(n, dtype=int)
    idx = rs.choice(n, size=n_out, replace=False)
    direction = rs.normal(size=(n_out, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    X[idx] += direction * rs.uniform(3.0, 6.0, size=(n_out, 1)) * X.std(axis=0)
    y[idx] = 1
    return Dataset(name, X, y, source="synthetic")


def toy_corpus(k=5, seed=0):
    rs = np.random.default_rng(seed)
    out = []
    for i in range(k):
        n = int(rs.integers(50, 90))
        d = int(rs.integers(2, 6))
        out.append(planted_dataset(f"toy{i}", seed * 100 + i, n=n, d=d, n_out=max(3, n // 15)))
    return Corpus(tuple(out))


@pytest.fixture(scope="session")
def corpus5():
    return toy_corpus(5, seed=0)


@pytest.fixture(scope="session")
def lof_meta(corpus5):
    from hpod.detectors import DetectorSpec
    from hpod.pipeline import ScoreCache, offline_meta_train

    cache = ScoreCache()
    meta = offline_meta_train(Corpus(corpus5.datasets[:4]), DetectorSpec.builtin("lof"), seed=11, cache=cache)
    return meta, cache, corpus5.datasets[4]


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
