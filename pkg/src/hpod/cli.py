"""Command-line entry point: ``hpod meta-train | optimize | benchmark``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import load_corpus, load_dataset
from .detectors import DetectorSpec
from .errors import ConfigError, DataError, NumericalError, VersionMismatch
from .evaluation import ALL_METHODS, loocv_benchmark
from .hpspace import builtin_space, load_space, meta_grid
from .metrics import average_precision
from .pipeline import MetaModel, ScoreCache, TestTask, hpod0_optimize, hpod_optimize, offline_meta_train

log = logging.getLogger("hpod")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_VERSION = 0, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hpod", description="Meta-learned hyperparameter optimization for outlier detectors.",
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    p.add_argument("--threads", type=int, default=1, help="worker cap for parallel benchmark folds")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mt = sub.add_parser("meta-train", help="learn a meta-model from a labeled corpus",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    mt.add_argument("--corpus", required=True, help="directory of labeled CSV files")
    mt.add_argument("--algo", choices=["lof", "iforest"], default="lof", help="detector")
    mt.add_argument("--space", default=None, help="HP space manifest JSON (default: the shipped one)")
    mt.add_argument("--label-col", default="outlier", help="name of the 0/1 label column")
    mt.add_argument("--seed", type=int, required=True, help="root random seed")
    mt.add_argument("--out", required=True, help="output directory")

    op = sub.add_parser("optimize", help="select an HP for an unlabeled dataset",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    op.add_argument("--model", required=True, help="meta_model.json from meta-train")
    op.add_argument("--data", required=True, help="CSV of the test dataset")
    op.add_argument("--label-col", default="outlier", help="label column to ignore (or use with --with-labels)")
    op.add_argument("--iters", type=int, default=40, help="SMBO iterations E")
    op.add_argument("--k-init", type=int, default=10, help="initial HPs from the nearest meta-train dataset")
    op.add_argument("--candidates", type=int, default=2000, help="fresh HP samples per iteration")
    op.add_argument("--budget-secs", type=float, default=None, help="wall-clock budget (anytime stop)")
    op.add_argument("--seed", type=int, required=True, help="random seed")
    op.add_argument("--method", choices=["hpod", "hpod0"], default="hpod", help="full loop or predictor-only")
    op.add_argument("--n-random", type=int, default=100, help="samples for --method hpod0")
    op.add_argument("--with-labels", action="store_true", help="append true AP columns to the trace")
    op.add_argument("--out", default=".", help="output directory")

    bm = sub.add_parser("benchmark", help="leave-one-out benchmark over a labeled corpus",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    bm.add_argument("--corpus", required=True, help="directory of labeled CSV files")
    bm.add_argument("--algo", choices=["lof", "iforest"], default="lof", help="detector")
    bm.add_argument("--space", default=None, help="HP space manifest JSON")
    bm.add_argument("--label-col", default="outlier", help="name of the 0/1 label column")
    bm.add_argument("--methods", default="HPOD,RANDOM,DEFAULT,GB,AS,HPOD0,HYPERENSEMBLE",
                    help=f"comma list from {','.join(ALL_METHODS)}")
    bm.add_argument("--trials", type=int, default=5, help="repetitions of stochastic methods")
    bm.add_argument("--iters", type=int, default=40, help="SMBO iterations E")
    bm.add_argument("--seed", type=int, required=True, help="root random seed")
    bm.add_argument("--out", required=True, help="output directory")
    return p


def _space(args):
    if args.space:
        path = Path(args.space)
        if not path.is_file():
            raise ConfigError(f"space manifest not found: {path}")
        try:
            space = load_space(path)
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: malformed space manifest ({exc})") from None
        if space.algorithm.lower() != args.algo:
            raise ConfigError(f"space manifest is for {space.algorithm}, not {args.algo}")
        return space
    return builtin_space(args.algo)


def _corpus(args):
    if not Path(args.corpus).is_dir():
        raise ConfigError(f"corpus directory not found: {args.corpus}")
    return load_corpus(args.corpus, args.label_col)


def cmd_meta_train(args) -> int:
    corpus = _corpus(args)
    spec = DetectorSpec(args.algo, _space(args))
    meta = offline_meta_train(corpus, spec, meta_grid(spec.space), args.seed)
    path = meta.save(Path(args.out) / "meta_model.json")
    n, m = meta.perf.shape
    print(f"wrote {path}")
    print(f"datasets n={n}, grid m={m}, PPE training rows={n * m}")
    print("anchor set: " + ", ".join(s.key() for s in meta.anchors.settings))
    print(f"PPE training MSE: {meta.ppe.train_mse:.6g}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    if not Path(args.model).is_file():
        raise ConfigError(f"model file not found: {args.model}")
    meta = MetaModel.load(args.model)
    ds = load_dataset(args.data, args.label_col if args.with_labels else _maybe_label(args.data, args.label_col))
    if args.with_labels and not ds.has_both_classes():
        raise DataError("--with-labels needs a label column with both classes")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = TestTask(meta, ds.X, ScoreCache())
    truth = (lambda s: average_precision(task.scores([s])[0], ds.y)) if args.with_labels else None

    if args.method == "hpod0":
        best, settings, preds = hpod0_optimize(meta, ds.X, args.n_random, args.seed, task=task, return_all=True)
        rows = [[0, s.key(), p, max(preds[: k + 1]), -1, 0.0, 0.0] for k, (s, p) in enumerate(zip(settings, preds))]
        cols = ["iter", "hp_json", "pred_perf", "incumbent_pred", "meta_task", "transfer_w", "ms"]
        if truth:
            cols += ["true_ap"]
            rows = [r + [truth(s)] for r, s in zip(rows, settings)]
    else:
        best, trace = hpod_optimize(meta, ds.X, args.iters, args.candidates, args.budget_secs, args.seed,
                                    args.k_init, task=task, truth=truth)
        cols = trace.columns(args.with_labels)
        rows = list(trace.rows(args.with_labels))

    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        w.writerows(rows)
    doc = {"algorithm": meta.algorithm, "hp": best.as_dict(), "predicted_ap": task.predict(best)}
    if truth:
        doc["true_ap"] = truth(best)
    (out / "selected_hp.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def _maybe_label(path, label_col):
    """Drop the label column if present so labels never reach the optimizer."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return label_col if label_col in [h.strip() for h in header] else None


def cmd_benchmark(args) -> int:
    corpus = _corpus(args)
    spec = DetectorSpec(args.algo, _space(args))
    methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in ALL_METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {', '.join(ALL_METHODS)}")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    report = loocv_benchmark(corpus, spec, meta_grid(spec.space), methods, args.trials, args.seed,
                             E=args.iters, threads=args.threads)
    for path in report.write(args.out):
        print(f"wrote {path}")
    agg = report.aggregates()
    for m in methods:
        print(f"{m:>16s}  mean normalized AP rank {agg[m]['mean_norm_rank']:.4f}")
    return EXIT_OK


COMMANDS = {"meta-train": cmd_meta_train, "optimize": cmd_optimize, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except VersionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
