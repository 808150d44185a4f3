"""Offline meta-training and the online SMBO loop.

Offline: score every meta-grid HP on every labeled dataset, derive the
performance matrix, meta-features, anchor set and IPMs, then fit the
performance predictor and one GP meta-surrogate per dataset.

Online: warm-start a GP surrogate from the most similar meta-train dataset,
then repeatedly pick the candidate with the highest expected improvement
(with the best-matching meta-surrogate added to the surrogate mean), score
it with the predictor, and refit.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _rng
from .data import Corpus, Dataset, standardize_matrix
from .detectors import DetectorSpec, lof_scores, pairwise_distances
from .errors import ConfigError, DataError, HpodError, VersionMismatch
from .hpspace import HpSetting, HpSpace, encode, encode_many, meta_grid, sample
from .ipm import AnchorSet, build_anchor_set, extract_ipms, rank_normalize
from .metafeatures import SCHEMA_VERSION, MetaFeatureVector, MfScaler, extract, nearest_dataset
from .metrics import average_precision
from .ppe import PpeModel, PpeParams, build_training_table, ppe_features, train_ppe
from .surrogate import GpModel, expected_improvement, fit_meta_surrogates, gp_fit, transfer_predict, weighted_kendall

log = logging.getLogger(__name__)

MODEL_FORMAT = "hpod-metamodel/1"
TOOL_VERSION = "0.1.0"
ACQUISITIONS = ("ei", "greedy", "random")
INITS = ("meta", "random")


def fingerprint(X) -> str:
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    h = hashlib.sha256(str(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()[:20]


class ScoreCache:
    """Memoizes detector scores and meta-features per (data fingerprint, HP).

    Detector seeds depend only on the root seed and the HP, so the same entry
    is valid across LOOCV folds and trials.
    """

    def __init__(self):
        self._scores: dict = {}
        self._mf: dict = {}

    def __len__(self):
        return len(self._scores)

    def scores(self, spec: DetectorSpec, X_std, settings, seed: int, data_key: Optional[str] = None) -> list:
        """Score vectors for each setting, computing only the missing ones."""
        data_key = data_key or fingerprint(X_std)
        out = [self._scores.get((spec.algorithm, data_key, seed, s.key())) for s in settings]
        todo = [k for k, v in enumerate(out) if v is None]
        if not todo:
            return out
        if spec.algorithm == "LOF":
            by_metric: dict = {}
            for k in todo:
                by_metric.setdefault(settings[k]["metric"], []).append(k)
            for metric, ks in by_metric.items():
                D = pairwise_distances(X_std, metric)
                for k in ks:
                    out[k] = lof_scores(X_std, settings[k]["n_neighbors"], metric, D=D).values
        else:
            for k in todo:
                out[k] = spec.run(X_std, settings[k], seed).values
        for k in todo:
            self._scores[(spec.algorithm, data_key, seed, settings[k].key())] = out[k]
        return out

    def metafeatures(self, X_raw, seed: int) -> MetaFeatureVector:
        key = (fingerprint(X_raw), seed)
        if key not in self._mf:
            self._mf[key] = extract(X_raw, seed)
        return self._mf[key]


# ------------------------------------------------------------------ types

@dataclass
class PerfMatrix:
    values: np.ndarray
    dataset_names: list
    grid: list

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.dataset_names), len(self.grid)):
            raise ValueError(f"PerfMatrix shape {v.shape} disagrees with labels")
        if not np.all(np.isfinite(v)) or np.any((v < 0) | (v > 1)):
            raise ValueError("PerfMatrix entries must be finite and in [0, 1]")
        self.values = v

    @property
    def shape(self):
        return self.values.shape


@dataclass
class MetaModel:
    algorithm: str
    space: HpSpace
    perf: PerfMatrix
    meta_features: np.ndarray
    scaler: MfScaler
    anchors: AnchorSet
    ppe: PpeModel
    surrogates: list
    seed: int
    corpus_shapes: list = field(default_factory=list)
    mf_schema: str = SCHEMA_VERSION

    @property
    def spec(self) -> DetectorSpec:
        return DetectorSpec(self.algorithm, self.space)

    @property
    def grid(self) -> list:
        return self.perf.grid

    @property
    def detector_seed(self) -> int:
        return _rng.derive_seed(self.seed, "detector")

    @property
    def mf_seed(self) -> int:
        return _rng.derive_seed(self.seed, "metafeatures")

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "manifest": {
                "tool_version": TOOL_VERSION,
                "seed": self.seed,
                "corpus": self.corpus_shapes,
                "space_digest": self.space.digest(),
                "mf_schema": self.mf_schema,
            },
            "algorithm": self.algorithm,
            "space": self.space.to_json(),
            "perf": {
                "datasets": list(self.perf.dataset_names),
                "grid": [s.as_dict() for s in self.perf.grid],
                "values": self.perf.values.tolist(),
            },
            "meta_features": np.asarray(self.meta_features).tolist(),
            "mf_scaler": self.scaler.to_json(),
            "anchors": {
                "indices": list(self.anchors.indices),
                "objective_trace": list(self.anchors.objective_trace),
            },
            "ppe": self.ppe.to_json(),
            "surrogates": [g.to_json() for g in self.surrogates],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def from_json(cls, doc: dict) -> "MetaModel":
        fmt = doc.get("format")
        man = doc.get("manifest", {})
        if fmt != MODEL_FORMAT or man.get("tool_version") != TOOL_VERSION:
            raise VersionMismatch(
                f"model format {fmt!r} / tool {man.get('tool_version')!r}; "
                f"this build reads {MODEL_FORMAT!r} / {TOOL_VERSION!r}"
            )
        if man.get("mf_schema") != SCHEMA_VERSION:
            raise VersionMismatch(f"meta-feature schema {man.get('mf_schema')!r} != {SCHEMA_VERSION!r}")
        space = HpSpace.from_json(doc["space"])
        if man.get("space_digest") != space.digest():
            raise VersionMismatch("HP space digest does not match the stored manifest")
        grid = [space.setting(g) for g in doc["perf"]["grid"]]
        perf = PerfMatrix(np.asarray(doc["perf"]["values"], dtype=float), list(doc["perf"]["datasets"]), grid)
        idx = tuple(doc["anchors"]["indices"])
        anchors = AnchorSet(idx, tuple(grid[j] for j in idx), tuple(doc["anchors"]["objective_trace"]))
        return cls(
            algorithm=doc["algorithm"],
            space=space,
            perf=perf,
            meta_features=np.asarray(doc["meta_features"], dtype=float),
            scaler=MfScaler.from_json(doc["mf_scaler"]),
            anchors=anchors,
            ppe=PpeModel.from_json(doc["ppe"]),
            surrogates=[GpModel.from_json(g) for g in doc["surrogates"]],
            seed=int(man["seed"]),
            corpus_shapes=man.get("corpus", []),
            mf_schema=man["mf_schema"],
        )

    @classmethod
    def load(cls, path) -> "MetaModel":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a JSON document ({exc})") from None
        return cls.from_json(doc)


@dataclass
class TraceRecord:
    iteration: int
    setting: HpSetting
    pred: float
    incumbent: HpSetting
    incumbent_pred: float
    meta_task: int
    transfer_w: float
    ms: float
    true_ap: Optional[float] = None


@dataclass
class OptTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    @property
    def incumbent_preds(self) -> list:
        return [r.incumbent_pred for r in self.records]

    def columns(self, with_labels: bool = False) -> list:
        cols = ["iter", "hp_json", "pred_perf", "incumbent_pred", "meta_task", "transfer_w", "ms"]
        return cols + ["true_ap", "incumbent_true_ap"] if with_labels else cols

    def rows(self, with_labels: bool = False):
        best_true, best_pred = None, -math.inf
        for r in self.records:
            row = [r.iteration, r.setting.key(), r.pred, r.incumbent_pred, r.meta_task, r.transfer_w, round(r.ms, 3)]
            if with_labels:
                if r.pred > best_pred:
                    best_pred, best_true = r.pred, r.true_ap
                row += [r.true_ap, best_true]
            yield row


# ---------------------------------------------------------------- offline

def _grid_scores(spec, ds: Dataset, grid, seed, cache: ScoreCache):
    Xs = standardize_matrix(ds.X)
    return cache.scores(spec, Xs, grid, seed, fingerprint(Xs))


def offline_meta_train(
    corpus: Corpus,
    spec: DetectorSpec,
    grid: Optional[list] = None,
    seed: int = 0,
    ppe_params: Optional[PpeParams] = None,
    cache: Optional[ScoreCache] = None,
) -> MetaModel:
    """Learn everything the online phase needs from a labeled corpus."""
    if len(corpus) < 1:
        raise DataError("empty corpus")
    grid = list(grid) if grid is not None else meta_grid(spec.space)
    if not grid:
        raise ConfigError("empty meta grid")
    cache = cache or ScoreCache()
    det_seed = _rng.derive_seed(seed, "detector")
    mf_seed = _rng.derive_seed(seed, "metafeatures")

    n, m = len(corpus), len(grid)
    P = np.zeros((n, m))
    ranked = []
    for i, ds in enumerate(corpus):
        if not ds.has_both_classes():
            raise DataError(f"{ds.name}: needs both inlier and outlier labels")
        scores = _grid_scores(spec, ds, grid, det_seed, cache)
        P[i] = [average_precision(s, ds.y) for s in scores]
        ranked.append(np.vstack([rank_normalize(s) for s in scores]))
        log.info("scored %s: %d settings", ds.name, m)
    perf = PerfMatrix(P, corpus.names, grid)

    M = np.vstack([cache.metafeatures(ds.X, mf_seed).values for ds in corpus])
    scaler = MfScaler.fit(M)

    anchors = build_anchor_set(P, ranked, grid)
    ipms = np.zeros((n, m, 3))
    for i in range(n):
        anc = ranked[i][list(anchors.indices)]
        for j in range(m):
            ipms[i, j] = extract_ipms(ranked[i][j], anc)

    E = encode_many(grid, spec.space)
    table = build_training_table(P, E, M, ipms)
    params = ppe_params or PpeParams(seed=_rng.derive_seed(seed, "ppe"))
    ppe = train_ppe(table, params)
    surrogates = fit_meta_surrogates(P, E)

    shapes = [{"name": ds.name, "n": ds.n, "d": ds.d} for ds in corpus]
    return MetaModel(spec.algorithm, spec.space, perf, M, scaler, anchors, ppe, surrogates, int(seed), shapes)


# ----------------------------------------------------------------- online

class TestTask:
    """A test dataset prepared for online scoring: meta-features and anchors."""

    __test__ = False  # not a pytest class

    def __init__(self, meta: MetaModel, X_test, cache: Optional[ScoreCache] = None):
        self.meta = meta
        self.spec = meta.spec
        self.cache = cache or ScoreCache()
        self.X_raw = np.asarray(X_test, dtype=float)
        if self.X_raw.ndim != 2 or self.X_raw.shape[0] < 2:
            raise DataError("test data needs at least 2 rows")
        self.X_std = standardize_matrix(self.X_raw)
        self.key = fingerprint(self.X_std)
        self.mf = self.cache.metafeatures(self.X_raw, meta.mf_seed)
        anchor_scores = self.scores(list(meta.anchors.settings))
        self.anchor_ranked = np.vstack([rank_normalize(s) for s in anchor_scores])
        self.nearest = nearest_dataset(self.mf, meta.meta_features, meta.scaler)

    def scores(self, settings) -> list:
        return self.cache.scores(self.spec, self.X_std, settings, self.meta.detector_seed, self.key)

    def predict(self, setting: HpSetting) -> float:
        """PPE-predicted AP of ``setting``; -inf if the detector fails."""
        try:
            s = self.scores([setting])[0]
            ipm = extract_ipms(s, self.anchor_ranked)
            x = ppe_features(encode(setting, self.meta.space), self.mf, ipm)
            val = float(self.meta.ppe.predict(x[None, :])[0])
        except (HpodError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("evaluation of %r failed: %s", setting, exc)
            return -math.inf
        return val if math.isfinite(val) else -math.inf


@dataclass
class SearchState:
    settings: list = field(default_factory=list)
    encodings: list = field(default_factory=list)
    preds: list = field(default_factory=list)
    meta_side: list = field(default_factory=list)
    keys: set = field(default_factory=set)
    surrogate: Optional[GpModel] = None

    def best_index(self) -> int:
        return int(np.argmax(self.preds))

    def best_pred(self) -> float:
        return float(max(self.preds))


def _meta_side_values(meta: MetaModel, setting: HpSetting, enc, grid_index: dict) -> np.ndarray:
    """Per meta-train dataset: true AP if ``setting`` is on the grid, else t_i mean."""
    j = grid_index.get(setting.key())
    if j is not None:
        return meta.perf.values[:, j].copy()
    return np.array([t.mean(enc[None, :])[0] for t in meta.surrogates])


def _fit_surrogate(state: SearchState) -> Optional[GpModel]:
    ok = [k for k, p in enumerate(state.preds) if math.isfinite(p)]
    if not ok:
        return None
    return gp_fit(np.vstack([state.encodings[k] for k in ok]), np.array([state.preds[k] for k in ok]))


def transfer_weight(meta: MetaModel, state: SearchState):
    """(i*, w): the meta-train dataset whose values best rank-agree with the predictions."""
    ok = [k for k, p in enumerate(state.preds) if math.isfinite(p)]
    if len(ok) < 2:
        return -1, 0.0
    a = np.array([state.preds[k] for k in ok])
    B = np.vstack([state.meta_side[k] for k in ok])
    taus = np.array([weighted_kendall(a, B[:, i]) for i in range(B.shape[1])])
    i_star = int(np.argmax(taus))
    return i_star, float(min(max(taus[i_star], 0.0), 1.0))


def candidate_pool(meta: MetaModel, n_candidates: int, seed: int, exclude: set):
    """Grid plus fresh samples, minus evaluated HPs, sorted by encoding."""
    space = meta.space
    pool = list(meta.grid)
    if n_candidates > 0:
        pool += sample(space, n_candidates, seed)
    seen = set(exclude)
    uniq = []
    for s in pool:
        k = s.key()
        if k not in seen:
            seen.add(k)
            uniq.append(s)
    if not uniq:
        return [], np.zeros((0, space.encoding_length))
    E = encode_many(uniq, space)
    order = np.lexsort(E.T[::-1])
    return [uniq[k] for k in order], E[order]


def online_init(meta: MetaModel, task: TestTask, k_init: int = 10, seed: int = 0, init: str = "meta"):
    """Initial evaluated set and surrogate.

    ``init="meta"`` takes the top ``k_init`` grid HPs of the nearest meta-train
    dataset; ``init="random"`` draws ``k_init`` HPs from the sampling hull.
    """
    if init not in INITS:
        raise ConfigError(f"unknown init {init!r}")
    m = len(meta.grid)
    if k_init < 1 or k_init > m:
        raise ConfigError(f"k_init must be in [1, {m}]")
    if init == "meta":
        row = meta.perf.values[task.nearest]
        order = np.argsort(-row, kind="stable")[:k_init]
        settings = [meta.grid[j] for j in order]
    else:
        settings, seen = [], set()
        draws = sample(meta.space, 4 * k_init, _rng.derive_seed(seed, "random-init"))
        for s in draws:
            if s.key() not in seen:
                seen.add(s.key())
                settings.append(s)
            if len(settings) == k_init:
                break
    grid_index = {s.key(): j for j, s in enumerate(meta.grid)}
    state = SearchState()
    for s in settings:
        enc = encode(s, meta.space)
        state.settings.append(s)
        state.encodings.append(enc)
        state.preds.append(task.predict(s))
        state.meta_side.append(_meta_side_values(meta, s, enc, grid_index))
        state.keys.add(s.key())
    state.surrogate = _fit_surrogate(state)
    return state


def hpod_optimize(
    meta: MetaModel,
    X_test,
    E: int = 40,
    n_candidates: int = 2000,
    budget_secs: Optional[float] = None,
    seed: int = 0,
    k_init: int = 10,
    acquisition: str = "ei",
    init: str = "meta",
    transfer: bool = True,
    cache: Optional[ScoreCache] = None,
    task: Optional[TestTask] = None,
    truth: Optional[Callable[[HpSetting], float]] = None,
):
    """Run the online loop for ``E`` iterations (or until the budget runs out).

    Returns ``(best_setting, trace)``. ``truth``, if given, maps a setting to
    its true AP and is only used to annotate the trace.
    """
    if E < 0:
        raise ConfigError("E must be >= 0")
    if acquisition not in ACQUISITIONS:
        raise ConfigError(f"unknown acquisition {acquisition!r}")
    t0 = time.perf_counter()
    task = task or TestTask(meta, X_test, cache)
    state = online_init(meta, task, k_init, seed, init)
    trace = OptTrace()
    init_meta_task = task.nearest if init == "meta" else -1
    init_ms = (time.perf_counter() - t0) * 1000.0 / max(1, len(state.settings))
    best = -math.inf
    best_s = None
    for s, p in zip(state.settings, state.preds):
        if p > best:
            best, best_s = p, s
        trace.append(TraceRecord(0, s, p, best_s or s, best, init_meta_task, 0.0, init_ms,
                                 truth(s) if truth else None))

    grid_index = {s.key(): j for j, s in enumerate(meta.grid)}
    pick_rng = _rng.rng(seed, "acquisition")
    for e in range(1, E + 1):
        if budget_secs is not None and time.perf_counter() - t0 >= budget_secs:
            log.info("budget of %.1fs reached after %d iterations", budget_secs, e - 1)
            break
        ti = time.perf_counter()
        if transfer:
            i_star, w = transfer_weight(meta, state)
        else:
            i_star, w = -1, 0.0
        pool, P_enc = candidate_pool(meta, n_candidates, _rng.derive_seed(seed, "pool", e), state.keys)
        if not pool:
            log.info("candidate pool exhausted after %d iterations", e - 1)
            break
        if acquisition == "random":
            k = int(pick_rng.integers(len(pool)))
        elif state.surrogate is None:
            k = 0
        else:
            t = meta.surrogates[i_star] if i_star >= 0 else None
            mu, sd = transfer_predict(state.surrogate, t, w, P_enc)
            if acquisition == "greedy":
                k = int(np.argmax(mu))
            else:
                k = int(np.argmax(expected_improvement(mu, sd, state.best_pred())))
        s = pool[k]
        enc = P_enc[k]
        p = task.predict(s)
        state.settings.append(s)
        state.encodings.append(enc)
        state.preds.append(p)
        state.meta_side.append(_meta_side_values(meta, s, enc, grid_index))
        state.keys.add(s.key())
        state.surrogate = _fit_surrogate(state)
        if p > best:
            best, best_s = p, s
        ms = (time.perf_counter() - ti) * 1000.0
        trace.append(TraceRecord(e, s, p, best_s or s, best, i_star, w, ms, truth(s) if truth else None))
        log.debug("iter %d: %r pred=%.4f incumbent=%.4f w=%.3f", e, s, p, best, w)

    return state.settings[state.best_index()], trace


def hpod0_optimize(meta: MetaModel, X_test, n_random: int = 100, seed: int = 0,
                   cache: Optional[ScoreCache] = None, task: Optional[TestTask] = None,
                   return_all: bool = False):
    """Predictor-only selection: best predicted HP among ``n_random`` draws.

    With ``return_all`` the sampled settings and their predictions are
    returned as well.
    """
    if n_random < 1:
        raise ConfigError("n_random must be >= 1")
    task = task or TestTask(meta, X_test, cache)
    settings = sample(meta.space, n_random, _rng.derive_seed(seed, "hpod0"))
    preds = [task.predict(s) for s in settings]
    best = settings[int(np.argmax(preds))]
    if return_all:
        return best, settings, preds
    return best
