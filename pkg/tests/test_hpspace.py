import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpod.errors import ConfigError
from hpod.hpspace import (HpDomain, HpSpace, builtin_space, decode, encode, encode_many, load_space, meta_grid,
                          sample)

LOF = builtin_space("lof")
IFOREST = builtin_space("iforest")


def test_grid_sizes():
    assert len(meta_grid(LOF)) == 40 * 5 == 200
    assert len(meta_grid(IFOREST)) == 8 * 9 * 4 == 288


def test_lof_grid_contents():
    grid = meta_grid(LOF)
    assert sorted({s["n_neighbors"] for s in grid}) == list(range(1, 80, 2))
    assert LOF.domain("metric").choices == ("chebyshev", "minkowski", "cosine", "euclidean", "manhattan")
    # first domain varies slowest
    assert [s["metric"] for s in grid[:5]] == list(LOF.domain("metric").choices)
    assert grid[5]["n_neighbors"] == 3


def test_iforest_grid_contents():
    grid = meta_grid(IFOREST)
    assert sorted({s["n_estimators"] for s in grid}) == [10, 20, 30, 40, 50, 75, 100, 150]
    assert sorted({s["max_features"] for s in grid}) == [0.2, 0.4, 0.6, 0.8]
    assert len({s["max_samples"] for s in grid}) == 9


def test_single_domain_grid():
    space = HpSpace("toy", (HpDomain("c", "categorical", choices=("a", "b"), grid=("a", "b")),))
    assert [s.values for s in meta_grid(space)] == [("a",), ("b",)]


def test_grid_size_is_product():
    space = HpSpace("toy", (
        HpDomain("i", "integer", lo=0, hi=10, grid=(1, 2, 3)),
        HpDomain("r", "real", lo=0, hi=1, grid=(0.5, 0.7)),
        HpDomain("c", "categorical", choices=("x", "y", "z"), grid=("x", "y", "z")),
    ))
    grid = meta_grid(space)
    assert len(grid) == 3 * 2 * 3
    assert [s.values for s in grid] == list(itertools.product((1, 2, 3), (0.5, 0.7), ("x", "y", "z")))


def test_grid_value_outside_domain():
    with pytest.raises(ConfigError):
        meta_grid(LOF, [[0, 3], ["cosine"]])
    with pytest.raises(ConfigError):
        HpDomain("i", "integer", lo=1, hi=5, grid=(9,))


def test_domain_validation():
    with pytest.raises(ConfigError):
        HpDomain("c", "categorical", choices=("only",))
    with pytest.raises(ConfigError):
        HpDomain("r", "real", lo=1.0, hi=1.0)


def test_iforest_sampling_bounds():
    draws = sample(IFOREST, 3000, seed=4)
    ne = np.array([s["n_estimators"] for s in draws])
    ms = np.array([s["max_samples"] for s in draws])
    mf = np.array([s["max_features"] for s in draws])
    assert ne.min() >= 10 and ne.max() <= 150
    assert ms.min() >= 0.1 and ms.max() <= 0.9
    assert mf.min() >= 0.2 and mf.max() <= 0.8


def test_lof_sampling_bounds_10k():
    draws = sample(LOF, 10_000, seed=1)
    k = np.array([s["n_neighbors"] for s in draws])
    assert k.min() >= 1 and k.max() <= 80
    assert {s["metric"] for s in draws} <= set(LOF.domain("metric").choices)
    assert {s["metric"] for s in draws} == set(LOF.domain("metric").choices)


def test_sample_determinism_and_count():
    assert sample(LOF, 1, seed=7) == sample(LOF, 1, seed=7)
    with pytest.raises(ValueError):
        sample(LOF, 0, seed=7)


def test_encode_bounds():
    lo = encode(LOF.setting({"n_neighbors": 1, "metric": "chebyshev"}), LOF)
    assert lo.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    hi = encode(LOF.setting({"n_neighbors": 80, "metric": "cosine"}), LOF)
    assert hi[0] == pytest.approx(1.0, abs=0.02)
    assert LOF.encoding_length == 6 and IFOREST.encoding_length == 3


def test_encoding_injective_on_grid():
    for space in (LOF, IFOREST):
        E = encode_many(meta_grid(space), space)
        assert len({row.tobytes() for row in E}) == E.shape[0]
        assert E.min() >= 0 and E.max() <= 1


def test_decode_roundtrip_on_grid():
    for space in (LOF, IFOREST):
        for s in meta_grid(space):
            assert decode(encode(s, space), space) == s


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_sample_respects_hull(seed, count):
    for space in (LOF, IFOREST):
        for s in sample(space, count, seed):
            for dom, v in zip(space.domains, s.values):
                if dom.numeric:
                    lo, hi = dom.hull
                    assert lo <= v <= hi
                else:
                    assert v in dom.grid_choices
            enc = encode(s, space)
            assert np.all((enc >= 0) & (enc <= 1))


def test_manifest_roundtrip(tmp_path):
    p = tmp_path / "space.json"
    p.write_text(json.dumps(IFOREST.to_json()))
    again = load_space(p)
    assert again == IFOREST
    assert again.digest() == IFOREST.digest()
    assert again.defaults == IFOREST.defaults


def test_setting_validation():
    with pytest.raises(ConfigError):
        LOF.setting({"n_neighbors": 5})
    with pytest.raises(ConfigError):
        LOF.setting({"n_neighbors": 5, "metric": "hamming"})
    s = LOF.setting({"metric": "cosine", "n_neighbors": 7})
    assert s.values == (7, "cosine")
    assert json.loads(s.key()) == {"metric": "cosine", "n_neighbors": 7}
