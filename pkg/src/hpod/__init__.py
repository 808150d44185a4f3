"""Meta-learned hyperparameter optimization for unsupervised outlier detectors."""
from .data import Corpus, Dataset, load_corpus, load_dataset, standardize
from .detectors import DetectorSpec, default_setting, iforest_scores, lof_scores
from .errors import ConfigError, DataError, HpodError, NumericalError, VersionMismatch
from .hpspace import HpSetting, HpSpace, builtin_space, encode, meta_grid, sample
from .pipeline import MetaModel, OptTrace, PerfMatrix, ScoreCache, hpod0_optimize, hpod_optimize, offline_meta_train

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Dataset", "load_corpus", "load_dataset", "standardize",
    "DetectorSpec", "default_setting", "iforest_scores", "lof_scores",
    "ConfigError", "DataError", "HpodError", "NumericalError", "VersionMismatch",
    "HpSetting", "HpSpace", "builtin_space", "encode", "meta_grid", "sample",
    "MetaModel", "OptTrace", "PerfMatrix", "ScoreCache", "hpod0_optimize", "hpod_optimize", "offline_meta_train",
]
