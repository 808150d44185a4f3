import csv

import numpy as np
import pytest

from conftest import toy_corpus
from hpod.detectors import DetectorSpec, default_setting
from hpod.evaluation import (ALL_METHODS, BenchmarkReport, ResultRow, baseline_select, hyper_ensemble_scores,
                             loocv_benchmark)
from hpod import _rng
from hpod.pipeline import ScoreCache, TestTask

import oracles


@pytest.fixture(scope="module")
def small_report():
    corpus = toy_corpus(4, seed=2)
    return loocv_benchmark(corpus, DetectorSpec.builtin("lof"), methods=["HPOD", "RANDOM", "DEFAULT", "GB", "AS",
                                                                         "HPOD0", "HYPERENSEMBLE"],
                           trials=2, seed=1, E=3, n_candidates=100, n_random=10, he_k=3)


def test_report_shape(small_report):
    r = small_report
    assert len(r.rows) == 4 * 7
    for row in r.rows:
        assert 0 <= row.norm_rank <= 1
        assert 0 < row.top_q <= 1
        assert 0 <= row.true_ap <= 1
        assert row.trials == (1 if row.method in ("DEFAULT", "GB", "AS") else 2)


def test_aggregates_and_wilcoxon(small_report):
    agg = small_report.aggregates()
    assert set(agg) == set(small_report.methods)
    for m, a in agg.items():
        assert a["mean_norm_rank"] == pytest.approx(small_report.column(m).mean())
        assert 1 <= a["mean_method_rank"] <= len(small_report.methods)
    # per-dataset method ranks always sum to k(k+1)/2
    k = len(small_report.methods)
    assert sum(a["mean_method_rank"] for a in agg.values()) == pytest.approx(k * (k + 1) / 2)
    wil = small_report.wilcoxon()
    assert [w[1] for w in wil] == small_report.methods[1:]
    assert all(0 <= w[2] <= 1 and 0 <= w[3] <= 1 for w in wil)


def test_report_files(small_report, tmp_path):
    paths = small_report.write(tmp_path)
    assert [p.name for p in paths] == ["report.csv", "report.md", "wilcoxon.csv"]
    with paths[0].open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 28
    assert set(rows[0]) == {"dataset", "method", "selected_hp", "true_ap", "norm_ap_rank", "top_q", "trials"}
    md = paths[1].read_text()
    assert "| **mean** |" in md and "Wilcoxon" in md


def test_deterministic_methods_repeatable(small_report):
    again = loocv_benchmark(toy_corpus(4, seed=2), DetectorSpec.builtin("lof"), methods=["DEFAULT", "GB", "AS"],
                            trials=2, seed=1, E=3, n_candidates=100)
    for m in ("DEFAULT", "GB", "AS"):
        np.testing.assert_array_equal(again.column(m), small_report.column(m))


def test_baselines(lof_meta):
    meta, cache, test = lof_meta
    task = TestTask(meta, test.X, cache)
    assert baseline_select("DEFAULT", meta, test.X) == default_setting("lof", test.n, meta.space)
    gb = baseline_select("GB", meta, test.X)
    assert gb == meta.grid[int(np.argmax(meta.perf.values.mean(axis=0)))]
    as_task = baseline_select("AS", meta, test.X, task=task)
    as_plain = baseline_select("AS", meta, test.X, cache=cache)
    assert as_task == as_plain == meta.grid[int(np.argmax(meta.perf.values[task.nearest]))]
    r1 = baseline_select("RANDOM", meta, test.X, seed=3)
    assert r1 == baseline_select("RANDOM", meta, test.X, seed=3)
    assert r1 in meta.grid
    with pytest.raises(ValueError):
        baseline_select("NOPE", meta, test.X)


def test_as_with_identical_meta_features_picks_row_maximizer(lof_meta):
    meta, cache, _ = lof_meta
    ds = toy_corpus(5, seed=0).datasets[0]
    assert baseline_select("AS", meta, ds.X, cache=ScoreCache()) == meta.grid[int(np.argmax(meta.perf.values[0]))]


def test_hyper_ensemble(lof_meta):
    meta, cache, test = lof_meta
    s = hyper_ensemble_scores(meta, test.X, k=4, seed=2, cache=cache)
    assert s.shape == (test.n,)
    assert np.all((s >= 0) & (s <= 1))
    # rebuild the ensemble from the member draws and an independent rank transform
    idx = _rng.rng(2, "hyper-ensemble").integers(len(meta.grid), size=4)
    members = TestTask(meta, test.X, cache).scores([meta.grid[j] for j in idx])
    expected = np.mean([oracles.rank_normalize_reference(list(m)) for m in members], axis=0)
    np.testing.assert_allclose(s, expected, atol=1e-12)
    with pytest.raises(ValueError):
        hyper_ensemble_scores(meta, test.X, k=0)


def test_loocv_argument_checks():
    corpus = toy_corpus(4, seed=2)
    with pytest.raises(ValueError):
        loocv_benchmark(corpus, DetectorSpec.builtin("lof"), methods=["BOGUS"])
    with pytest.raises(ValueError):
        loocv_benchmark(toy_corpus(2, seed=2), DetectorSpec.builtin("lof"))
    assert "HYPERENSEMBLE" in ALL_METHODS


def test_report_lookup_errors():
    r = BenchmarkReport("lof", ["A"], ["d"], [ResultRow("d", "A", "x", 0.5, 0.5, 0.5, 1)])
    assert r.value("d", "A") == 0.5
    with pytest.raises(KeyError):
        r.value("d", "B")
    assert r.wilcoxon("Z") == []
