"""CSV ingestion/export, synthetic cluster data and score grids."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ColumnMatrix, ContractError
from .forest import ForestModel, score_matrix


class DataFormatError(ValueError):
    """The input file does not follow the expected CSV layout."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    matrix: ColumnMatrix
    labels: np.ndarray | None
    name: str = ""
    columns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (self.matrix.rows,):
                raise ContractError(f"{y.size} labels for {self.matrix.rows} rows")
            if not np.all(np.isin(y, (0, 1))):
                raise ContractError("labels must be 0 or 1")
            y = y.astype(np.int8)
            y.flags.writeable = False
            object.__setattr__(self, "labels", y)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j}" for j in range(self.matrix.cols)))

    @property
    def has_both_classes(self) -> bool:
        return self.labels is not None and 0 < int(self.labels.sum()) < self.labels.size


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"row {line}, column {column!r}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DataFormatError(f"row {line}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(path: str | Path, label_column: str | None = "last", name: str | None = None) -> LabeledDataset:
    """Read a headed, comma-separated numeric file.

    ``label_column`` is a header name, ``"last"``, or ``None`` for unlabeled
    data. Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column is None:
            label_idx = None
        elif label_column == "last":
            label_idx = len(header) - 1
        elif label_column in header:
            label_idx = header.index(label_column)
        else:
            raise DataFormatError(f"{path}: label column {label_column!r} not in header")
        feature_idx = [j for j in range(len(header)) if j != label_idx]
        if not feature_idx:
            raise DataFormatError(f"{path}: no feature columns")
        rows: list[list[float]] = []
        labels: list[int] = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"row {line}: expected {len(header)} fields, got {len(rec)}")
            rows.append([_parse_float(rec[j], line, header[j]) for j in feature_idx])
            if label_idx is not None:
                y = _parse_float(rec[label_idx], line, header[label_idx])
                if y not in (0.0, 1.0):
                    raise DataFormatError(f"row {line}, column {header[label_idx]!r}: label {rec[label_idx]!r} is not 0/1")
                labels.append(int(y))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int8) if label_idx is not None else None
    ds = LabeledDataset(
        ColumnMatrix(np.array(rows)), y, name or path.stem, tuple(header[j] for j in feature_idx)
    )
    if y is not None and not ds.has_both_classes:
        warnings.warn(f"{path}: labels contain a single class; ranking metrics are unavailable", stacklevel=2)
    return ds


def write_csv(dataset: LabeledDataset, path: str | Path, label_name: str = "label") -> None:
    """Inverse of :func:`load_csv` (labels, if any, go in the last column)."""
    header = list(dataset.columns)
    if dataset.labels is not None:
        header.append(label_name)
    values = dataset.matrix.values
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(values.shape[0]):
            rec = [repr(float(v)) for v in values[i]]
            if dataset.labels is not None:
                rec.append(str(int(dataset.labels[i])))
            w.writerow(rec)


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian clusters (label 0) plus planted points (label 1).

    ``sdevs`` holds one isotropic spread per cluster.
    """

    kind: str
    sizes: tuple[int, ...]
    centers: tuple[tuple[float, ...], ...]
    sdevs: tuple[float, ...]
    outliers: tuple[tuple[float, ...], ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("bimodal", "blob"):
            raise ContractError(f"unknown synthetic kind {self.kind!r}")
        if not self.sizes or not (len(self.sizes) == len(self.centers) == len(self.sdevs)):
            raise ContractError("need at least one cluster with matching sizes, centers and sdevs")
        if any(s <= 0 for s in self.sdevs):
            raise ContractError("cluster sdevs must be positive")
        if any(n < 0 for n in self.sizes):
            raise ContractError("cluster sizes must be non-negative")
        dims = {len(c) for c in self.centers} | {len(o) for o in self.outliers}
        if len(dims) != 1:
            raise ContractError("centers and planted outliers must share one dimensionality")

    @classmethod
    def bimodal(
        cls,
        n_per_cluster: int = 500,
        centers: Sequence[Sequence[float]] = ((0.0, 0.0), (10.0, 10.0)),
        sdev: float = 1.0,
        seed: int = 0,
    ) -> SyntheticSpec:
        centers = tuple(tuple(float(v) for v in c) for c in centers)
        return cls("bimodal", (n_per_cluster,) * len(centers), centers, (float(sdev),) * len(centers), (), seed)

    @classmethod
    def blob(
        cls,
        n: int = 1000,
        center: Sequence[float] = (0.0, 0.0),
        sdev: float = 1.0,
        outliers: Sequence[Sequence[float]] = ((10.0, -10.0),),
        seed: int = 0,
    ) -> SyntheticSpec:
        return cls(
            "blob", (n,), (tuple(float(v) for v in center),), (float(sdev),),
            tuple(tuple(float(v) for v in o) for o in outliers), seed,
        )


def gen_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    rng = np.random.default_rng(spec.seed)
    parts = [
        rng.normal(loc=center, scale=sd, size=(n, len(center)))
        for n, center, sd in zip(spec.sizes, spec.centers, spec.sdevs)
    ]
    labels = [np.zeros(sum(spec.sizes), dtype=np.int8)]
    if spec.outliers:
        parts.append(np.array(spec.outliers, dtype=np.float64))
        labels.append(np.ones(len(spec.outliers), dtype=np.int8))
    return LabeledDataset(ColumnMatrix(np.vstack(parts)), np.concatenate(labels), name=f"synthetic-{spec.kind}")


# -------------------------------------------------------------------- grids


def grid_points(bounds, resolution: int) -> np.ndarray:
    (x0, x1), (y0, y1) = bounds
    if resolution < 1:
        raise ContractError("resolution must be >= 1")
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def score_grid(model: ForestModel, bounds, resolution: int, threads: int | None = None) -> np.ndarray:
    """Score a ``resolution x resolution`` lattice over ``bounds = ((x0, x1), (y0, y1))``.

    Returns an array of ``(x, y, score)`` rows.
    """
    if model.n_cols != 2:
        raise ContractError(f"score grids need a 2-column model, this one has {model.n_cols}")
    pts = grid_points(bounds, resolution)
    return np.column_stack([pts, score_matrix(pts, model, threads)])


def write_grid_csv(grid: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "score"])
        for x, y, s in grid:
            w.writerow([repr(float(x)), repr(float(y)), repr(float(s))])


__all__ = [
    "DataFormatError",
    "LabeledDataset",
    "SyntheticSpec",
    "gen_synthetic",
    "grid_points",
    "load_csv",
    "score_grid",
    "write_csv",
    "write_grid_csv",
]
