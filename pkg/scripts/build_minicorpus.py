"""Rebuild data/minicorpus/ from locally available copies of the UCI sources.

Each file mirrors the construction of an ODDS/DAMI benchmark dataset
(same base data, same outlier class, same size where the recipe is known).
Outlier subsamples are drawn with a fixed seed, so the output is stable.

Sources:
  * scikit-learn bundled datasets (wine, breast_cancer)
  * the ``keel-ds`` wheel, read as a zip archive so that its numpy pin
    never touches the environment:

        pip download keel-ds==0.2.5 --no-deps -d /tmp/keel
        python scripts/build_minicorpus.py --keel-wheel /tmp/keel/keel_ds-0.2.5-py3-none-any.whl
"""
import argparse
import glob
import zipfile
from pathlib import Path

import numpy as np
from sklearn.datasets import load_breast_cancer, load_wine

SEED = 0


def _read_keel(wheel: zipfile.ZipFile, member: str):
    text = wheel.read(f"keel_ds/data/{member}").decode()
    rows = [
        [c.strip() for c in line.split(",")]
        for line in text.splitlines()
        if line.strip() and not line.startswith("@")
    ]
    feats = [r[:-1] for r in rows]
    labels = [r[-1] for r in rows]
    return feats, labels


def _numeric(feats):
    return np.asarray(feats, dtype=float)


def _ordinal(feats):
    # categorical attributes coded by sorted category order, numeric kept as is
    cols = list(zip(*feats))
    out = []
    for col in cols:
        try:
            out.append([float(v) for v in col])
        except ValueError:
            cats = sorted(set(col))
            out.append([float(cats.index(v) + 1) for v in col])
    return np.asarray(out).T


def _drop_constant(X):
    keep = X.std(axis=0) > 0
    return X[:, keep]


def _subsample_outliers(X, y, n_out, rng):
    inl = np.flatnonzero(y == 0)
    out = np.sort(rng.choice(np.flatnonzero(y == 1), size=n_out, replace=False))
    idx = np.concatenate([inl, out])
    return X[idx], y[idx]


def build(keel_wheel: Path):
    rng = np.random.default_rng(SEED)
    wheel = zipfile.ZipFile(keel_wheel)
    ds = {}

    w = load_wine()
    X, y = w.data, (w.target == 0).astype(int)
    ds["wine"] = _subsample_outliers(X, y, 10, rng)

    feats, lab = _read_keel(wheel, "imbalanced/raw/glass5.dat")
    ds["glass"] = (_numeric(feats), np.array([v == "positive" for v in lab], int))

    feats, lab = _read_keel(wheel, "balanced/raw/wisconsin.dat")
    X, y = _numeric(feats), np.array([v == "4" for v in lab], int)
    ds["breastw"] = (X, y)
    # DAMI WBC: duplicate-free benign records plus 10 malignant
    benign = np.unique(X[y == 0], axis=0)
    Xw = np.vstack([benign, X[y == 1]])
    yw = np.r_[np.zeros(len(benign), int), np.ones(int(y.sum()), int)]
    ds["WBC"] = _subsample_outliers(Xw, yw, 10, rng)

    feats, lab = _read_keel(wheel, "balanced/raw/heart.dat")
    ds["HeartDisease"] = (_numeric(feats), np.array([v == "2" for v in lab], int))

    feats, lab = _read_keel(wheel, "balanced/raw/ionosphere.dat")
    ds["ionosphere"] = (
        _drop_constant(_numeric(feats)),
        np.array([v == "b" for v in lab], int),
    )

    b = load_breast_cancer()
    X, y = b.data, (b.target == 0).astype(int)
    ds["wbc"] = _subsample_outliers(X, y, 21, rng)
    ds["WDBC"] = _subsample_outliers(X, y, 10, rng)

    feats, lab = _read_keel(wheel, "balanced/raw/pima.dat")
    ds["pima"] = (_numeric(feats), np.array([v == "tested_positive" for v in lab], int))

    feats, lab = _read_keel(wheel, "imbalanced/raw/lymphography-normal-fibrosis.dat")
    ds["lympho"] = (_ordinal(feats), np.array([v == "positive" for v in lab], int))
    return ds


def write_csv(path: Path, X, y):
    header = ",".join([f"f{k}" for k in range(X.shape[1])] + ["outlier"])
    lines = [header]
    for row, lab in zip(X, y):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(lab)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--keel-wheel", default=None)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "minicorpus"))
    args = ap.parse_args()
    wheel = args.keel_wheel or sorted(glob.glob("/tmp/**/keel_ds-*.whl", recursive=True))[-1]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (X, y) in build(Path(wheel)).items():
        write_csv(out / f"{name}.csv", X, y)
        print(f"{name:14s} n={X.shape[0]:4d} d={X.shape[1]:3d} outliers={y.mean() * 100:.2f}%")


if __name__ == "__main__":
    main()
