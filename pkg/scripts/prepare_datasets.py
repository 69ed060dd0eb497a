"""Build the benchmark CSVs in ``data/`` from dataset copies shipped in PyPI wheels.

    python scripts/prepare_datasets.py [--wheel-dir DIR] [--out data]

Without ``--wheel-dir`` the two wheels are fetched with ``pip download``.
Every output has a header, numeric features and a 0/1 ``label`` column last
(1 = outlier).
"""

from __future__ import annotations

import argparse
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

WHEELS = {"keel": "keel-ds==0.2.5", "imbdb": "imbalanced-databases==0.1.1"}

# per-digit counts of the UCI pendigits training split, minus the outlier digit
PEN_OUTLIER_DIGIT = 0
PEN_TRAIN_COUNTS = {1: 779, 2: 780, 3: 719, 4: 780, 5: 720, 6: 720, 7: 778, 8: 719, 9: 719}
PEN_OUTLIERS = 156
PEN_SEED = 20190101


def _read_member(wheel: Path, suffix: str) -> str:
    with zipfile.ZipFile(wheel) as zf:
        (name,) = [n for n in zf.namelist() if n.endswith(suffix)]
        return zf.read(name).decode("utf-8")


def _keel_table(text: str) -> tuple[np.ndarray, list[str]]:
    rows = [
        [c.strip() for c in line.split(",")]
        for line in text.splitlines()
        if line.strip() and not line.startswith("@")
    ]
    return np.array([[float(v) for v in r[:-1]] for r in rows]), [r[-1] for r in rows]


def _write(path: Path, X: np.ndarray, y: np.ndarray) -> None:
    header = ",".join([f"x{j}" for j in range(X.shape[1])] + ["label"])
    with path.open("w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, lab in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")
    print(f"{path}: {X.shape[0]} rows x {X.shape[1]} cols, {int(y.sum())} outliers")


def satellite(imbdb: Path) -> tuple[np.ndarray, np.ndarray]:
    parts = [
        np.loadtxt(io.StringIO(_read_member(imbdb, f"satimage/sat.{s}.txt"))) for s in ("trn", "tst")
    ]
    data = np.vstack(parts)
    X, cls = data[:, :-1], data[:, -1].astype(int)
    return X, np.isin(cls, (2, 4, 5)).astype(int)


def pima(keel: Path) -> tuple[np.ndarray, np.ndarray]:
    X, lab = _keel_table(_read_member(keel, "/balanced/raw/pima.dat"))
    return X, np.array([v == "tested_positive" for v in lab], dtype=int)


def spambase(keel: Path) -> tuple[np.ndarray, np.ndarray]:
    X, lab = _keel_table(_read_member(keel, "/balanced/raw/spambase.dat"))
    return X, np.array([int(float(v)) for v in lab])


def pendigits(keel: Path) -> tuple[np.ndarray, np.ndarray]:
    X, lab = _keel_table(_read_member(keel, "/balanced/raw/penbased.dat"))
    digit = np.array([int(float(v)) for v in lab])
    rng = np.random.default_rng(PEN_SEED)
    keep = []
    for d, n in sorted(PEN_TRAIN_COUNTS.items()):
        keep.append(np.sort(rng.choice(np.flatnonzero(digit == d), n, replace=False)))
    keep.append(np.sort(rng.choice(np.flatnonzero(digit == PEN_OUTLIER_DIGIT), PEN_OUTLIERS, replace=False)))
    idx = np.concatenate(keep)
    return X[idx], (digit[idx] == PEN_OUTLIER_DIGIT).astype(int)


def _fetch(dest: Path) -> None:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(dest), *WHEELS.values()], check=True
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel-dir")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        wheel_dir = Path(args.wheel_dir or tmp)
        if args.wheel_dir is None:
            _fetch(wheel_dir)
        keel = Path(glob.glob(str(wheel_dir / "keel_ds-*.whl"))[0])
        imbdb = Path(glob.glob(str(wheel_dir / "imbalanced_databases-*.whl"))[0])
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "satellite.csv", *satellite(imbdb))
        _write(out / "pima.csv", *pima(keel))
        _write(out / "spambase.csv", *spambase(keel))
        _write(out / "pendigits.csv", *pendigits(keel))
    return 0


if __name__ == "__main__":
    sys.exit(main())
