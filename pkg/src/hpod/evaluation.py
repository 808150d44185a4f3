"""Baseline selectors, the hyper-ensemble, and the leave-one-out benchmark."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from . import _rng
from .data import Corpus, standardize_matrix
from .detectors import DetectorSpec, default_setting
from .hpspace import meta_grid
from .ipm import rank_normalize
from .metafeatures import nearest_dataset
from .metrics import average_precision, normalized_ap_rank, top_q, wilcoxon_signed_rank
from .pipeline import MetaModel, ScoreCache, TestTask, fingerprint, hpod0_optimize, hpod_optimize, offline_meta_train

log = logging.getLogger(__name__)

BASELINES = ("DEFAULT", "RANDOM", "GB", "AS", "HPOD0")
# name -> keyword overrides of hpod_optimize
HPOD_VARIANTS = {
    "HPOD": {},
    "HPOD_GREEDY": {"acquisition": "greedy"},
    "HPOD_RANDACQ": {"acquisition": "random"},
    "HPOD_RANDINIT": {"init": "random"},
    "HPOD_NOTRANSFER": {"transfer": False},
}
ALL_METHODS = tuple(HPOD_VARIANTS) + BASELINES + ("HYPERENSEMBLE",)
DETERMINISTIC = {"DEFAULT", "GB", "AS"}


def baseline_select(method: str, meta: MetaModel, X_test, seed: int = 0, task: Optional[TestTask] = None,
                    n_random: int = 100, cache: Optional[ScoreCache] = None):
    """HP chosen by one of the non-SMBO selectors."""
    method = method.upper()
    if method == "DEFAULT":
        return default_setting(meta.algorithm, np.asarray(X_test).shape[0], meta.space)
    if method == "RANDOM":
        j = int(_rng.rng(seed, "random-baseline").integers(len(meta.grid)))
        return meta.grid[j]
    if method == "GB":
        return meta.grid[int(np.argmax(meta.perf.values.mean(axis=0)))]
    if method == "AS":
        if task is not None:
            i0 = task.nearest
        else:
            mf = (cache or ScoreCache()).metafeatures(np.asarray(X_test, dtype=float), meta.mf_seed)
            i0 = nearest_dataset(mf, meta.meta_features, meta.scaler)
        return meta.grid[int(np.argmax(meta.perf.values[i0]))]
    if method == "HPOD0":
        return hpod0_optimize(meta, X_test, n_random, seed, cache=cache, task=task)
    raise ValueError(f"unknown baseline {method!r}")


def hyper_ensemble_scores(meta: MetaModel, X_test, k: int = 10, seed: int = 0,
                          cache: Optional[ScoreCache] = None) -> np.ndarray:
    """Mean rank-normalized scores of ``k`` HPs drawn uniformly from the grid."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cache = cache or ScoreCache()
    idx = _rng.rng(seed, "hyper-ensemble").integers(len(meta.grid), size=k)
    X_std = standardize_matrix(np.asarray(X_test, dtype=float))
    scores = cache.scores(meta.spec, X_std, [meta.grid[j] for j in idx], meta.detector_seed)
    return np.mean([rank_normalize(s) for s in scores], axis=0)


@dataclass
class ResultRow:
    dataset: str
    method: str
    selected: str
    true_ap: float
    norm_rank: float
    top_q: float
    trials: int


@dataclass
class BenchmarkReport:
    algorithm: str
    methods: list
    datasets: list
    rows: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)

    def value(self, dataset, method, attr="norm_rank") -> float:
        for r in self.rows:
            if r.dataset == dataset and r.method == method:
                return getattr(r, attr)
        raise KeyError((dataset, method))

    def column(self, method, attr="norm_rank") -> np.ndarray:
        return np.array([self.value(d, method, attr) for d in self.datasets])

    def aggregates(self) -> dict:
        ranks = np.vstack([self.column(m) for m in self.methods])
        # per-dataset method ranking, 1 = best, ties averaged
        pos = np.vstack([rankdata(-ranks[:, k]) for k in range(ranks.shape[1])]).T
        out = {}
        for i, m in enumerate(self.methods):
            out[m] = {
                "mean_norm_rank": float(ranks[i].mean()),
                "std_norm_rank": float(ranks[i].std()),
                "mean_ap": float(self.column(m, "true_ap").mean()),
                "mean_top_q": float(self.column(m, "top_q").mean()),
                "mean_method_rank": float(pos[i].mean()),
            }
        return out

    def wilcoxon(self, reference: str = "HPOD") -> list:
        """(reference, other, two-sided p, one-sided p that reference is better)."""
        out = []
        if reference not in self.methods:
            return out
        ref = self.column(reference)
        for m in self.methods:
            if m == reference:
                continue
            other = self.column(m)
            try:
                p2 = wilcoxon_signed_rank(ref, other)
                p1 = wilcoxon_signed_rank(ref, other, alternative="greater")
            except ValueError:
                p2 = p1 = 1.0
            out.append((reference, m, p2, p1))
        return out

    def write(self, out_dir) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "report.csv", out_dir / "report.md", out_dir / "wilcoxon.csv"]
        with paths[0].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "method", "selected_hp", "true_ap", "norm_ap_rank", "top_q", "trials"])
            for r in self.rows:
                w.writerow([r.dataset, r.method, r.selected, f"{r.true_ap:.6f}", f"{r.norm_rank:.6f}", f"{r.top_q:.2f}", r.trials])
        with paths[2].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["reference", "method", "p_two_sided", "p_one_sided_greater"])
            for ref, m, p2, p1 in self.wilcoxon():
                w.writerow([ref, m, f"{p2:.6g}", f"{p1:.6g}"])
        paths[1].write_text(self.markdown(), encoding="utf-8")
        return paths

    def markdown(self) -> str:
        agg = self.aggregates()
        lines = [f"# Benchmark: {self.algorithm}", "", "Normalized AP rank per dataset (1 = best grid HP, 0 = worst).", ""]
        lines.append("| dataset | " + " | ".join(self.methods) + " |")
        lines.append("|---|" + "---|" * len(self.methods))
        for d in self.datasets:
            lines.append(f"| {d} | " + " | ".join(f"{self.value(d, m):.4f}" for m in self.methods) + " |")
        lines.append("| **mean** | " + " | ".join(f"{agg[m]['mean_norm_rank']:.4f}" for m in self.methods) + " |")
        lines.append("| std | " + " | ".join(f"{agg[m]['std_norm_rank']:.4f}" for m in self.methods) + " |")
        lines.append("| mean method rank | " + " | ".join(f"{agg[m]['mean_method_rank']:.2f}" for m in self.methods) + " |")
        lines.append("| mean AP | " + " | ".join(f"{agg[m]['mean_ap']:.4f}" for m in self.methods) + " |")
        lines.append("| mean top-q | " + " | ".join(f"{agg[m]['mean_top_q']:.2f}" for m in self.methods) + " |")
        wil = self.wilcoxon()
        if wil:
            lines += ["", "## Paired Wilcoxon signed-rank tests", "", "| pair | p (two-sided) | p (reference better) |", "|---|---|---|"]
            for ref, m, p2, p1 in wil:
                lines.append(f"| {ref} vs {m} | {p2:.4g} | {p1:.4g} |")
        lines += [
            "",
            "top-q is the smallest q in {0.01, ..., 1} such that at most q*m grid HPs have a",
            "strictly higher AP than the selection; it is a quantile rule, not a significance test.",
            "",
        ]
        return "\n".join(lines)


def _true_ap(meta, task, setting, y):
    return average_precision(task.scores([setting])[0], y)


def _run_fold(i, corpus, spec, grid, methods, trials, seed, cache, E, n_candidates, k_init, n_random, he_k, keep_traces):
    ds = corpus[i]
    meta = offline_meta_train(corpus.without(i), spec, grid, seed, cache=cache)
    task = TestTask(meta, ds.X, cache)
    grid_aps = np.array([average_precision(s, ds.y) for s in task.scores(grid)])
    truth = (lambda s: _true_ap(meta, task, s, ds.y))
    rows, traces = [], {}
    for method in methods:
        n_trials = 1 if method in DETERMINISTIC else trials
        aps, sel = [], []
        for t in range(n_trials):
            tseed = _rng.derive_seed(seed, "trial", t, ds.name)
            if method == "HYPERENSEMBLE":
                sc = hyper_ensemble_scores(meta, ds.X, he_k, tseed, cache)
                aps.append(average_precision(sc, ds.y))
                sel.append(f"ensemble({he_k})")
                continue
            if method in HPOD_VARIANTS:
                best, trace = hpod_optimize(meta, ds.X, E, n_candidates, None, tseed, k_init, task=task,
                                            truth=truth if keep_traces else None, **HPOD_VARIANTS[method])
                if keep_traces:
                    traces[(ds.name, method, t)] = trace
            else:
                best = baseline_select(method, meta, ds.X, tseed, task, n_random, cache)
            aps.append(truth(best))
            sel.append(best.key())
        nr = [normalized_ap_rank(a, grid_aps) for a in aps]
        tq = [top_q(a, grid_aps) for a in aps]
        rows.append(ResultRow(ds.name, method, sel[0], float(np.mean(aps)), float(np.mean(nr)), float(np.mean(tq)), n_trials))
    log.info("fold %s done", ds.name)
    return rows, traces


def loocv_benchmark(corpus: Corpus, spec: DetectorSpec, grid=None, methods=("HPOD", "RANDOM", "DEFAULT"),
                    trials: int = 5, seed: int = 0, E: int = 40, n_candidates: int = 2000, k_init: int = 10,
                    n_random: int = 100, he_k: int = 10, cache: Optional[ScoreCache] = None,
                    threads: int = 1, keep_traces: bool = False) -> BenchmarkReport:
    """Hold out each dataset in turn, meta-train on the rest, and score every method."""
    if len(corpus) < 3:
        raise ValueError("LOOCV needs at least 3 datasets")
    methods = [m.upper() for m in methods]
    for m in methods:
        if m not in ALL_METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(ALL_METHODS)}")
    grid = list(grid) if grid is not None else meta_grid(spec.space)
    cache = cache or ScoreCache()
    det_seed = _rng.derive_seed(seed, "detector")
    # fill the grid cache up front so folds only read shared entries
    for ds in corpus:
        X_std = standardize_matrix(ds.X)
        cache.scores(spec, X_std, grid, det_seed, fingerprint(X_std))
    args = (corpus, spec, grid, methods, trials, seed, cache, E, n_candidates, k_init, n_random, he_k, keep_traces)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda i: _run_fold(i, *args), range(len(corpus))))
    else:
        results = [_run_fold(i, *args) for i in range(len(corpus))]
    report = BenchmarkReport(spec.algorithm, methods, corpus.names)
    for rows, traces in results:
        report.rows.extend(rows)
        report.traces.update(traces)
    return report
