"""Column-major numeric datasets and the per-subset summary statistics
used by the split engine."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

# Raw kurtosis is >= 1 for any non-constant column, so 0 is unambiguous and
# doubles as a zero sampling weight.
KURTOSIS_NO_SIGNAL = 0.0


class ContractError(ValueError):
    """A precondition of an operation was violated by the caller."""


class ColumnMatrix:
    """Immutable m x n matrix of finite float64 values stored column by column.

    ``values`` is a read-only Fortran-ordered view, so ``values[:, j]`` is
    contiguous.
    """

    __slots__ = ("_values",)

    def __init__(self, values) -> None:
        arr = np.array(values, dtype=np.float64, order="F", copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1, order="F")
        if arr.ndim != 2:
            raise ContractError(f"expected a 2-d array, got {arr.ndim} dimensions")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContractError(f"matrix must have at least one row and column, got {arr.shape}")
        bad = ~np.isfinite(arr)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise ContractError(f"non-finite value at row {row}, column {col}")
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def rows(self) -> int:
        return self._values.shape[0]

    @property
    def cols(self) -> int:
        return self._values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._values.shape

    def column(self, j: int) -> np.ndarray:
        return self._values[:, j]

    def take_rows(self, subset: RowSubset | np.ndarray) -> ColumnMatrix:
        idx = subset.indices if isinstance(subset, RowSubset) else np.asarray(subset)
        return ColumnMatrix(self._values[idx])

    def __repr__(self) -> str:
        return f"ColumnMatrix(rows={self.rows}, cols={self.cols})"


class RowSubset:
    """Ordered row indices into a :class:`ColumnMatrix`.

    Duplicates are allowed only when ``allow_duplicates`` is set (sampling with
    replacement).
    """

    __slots__ = ("_indices",)

    def __init__(self, indices, population: int | None = None, allow_duplicates: bool = False) -> None:
        idx = np.array(indices, dtype=np.int64, copy=True).ravel()
        if idx.size and idx.min() < 0:
            raise ContractError("row indices must be non-negative")
        if population is not None and idx.size and idx.max() >= population:
            raise ContractError(f"row index {idx.max()} out of range for {population} rows")
        if not allow_duplicates and np.unique(idx).size != idx.size:
            raise ContractError("duplicate row indices in a without-replacement subset")
        idx.flags.writeable = False
        self._indices = idx

    @classmethod
    def full(cls, m: int) -> RowSubset:
        return cls(np.arange(m), population=m)

    @property
    def indices(self) -> np.ndarray:
        return self._indices

    def __len__(self) -> int:
        return self._indices.size

    def __iter__(self):
        return iter(self._indices.tolist())

    def __repr__(self) -> str:
        return f"RowSubset(size={len(self)})"


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    sdev: float
    min: float
    max: float
    distinct_gt1: bool


@numba.njit(nogil=True, cache=True)
def _mean_sdev(x, idx):
    # two-pass, shifted by the mean
    m = idx.shape[0]
    s = 0.0
    for i in range(m):
        s += x[idx[i]]
    mean = s / m
    ss = 0.0
    for i in range(m):
        d = x[idx[i]] - mean
        ss += d * d
    return mean, math.sqrt(ss / m)


@numba.njit(nogil=True, cache=True)
def _min_max(x, idx):
    lo = x[idx[0]]
    hi = lo
    for i in range(1, idx.shape[0]):
        v = x[idx[i]]
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return lo, hi


@numba.njit(nogil=True, cache=True)
def _raw_kurtosis(x, idx):
    m = idx.shape[0]
    mean, sdev = _mean_sdev(x, idx)
    lo, hi = _min_max(x, idx)
    if lo == hi or sdev <= 0.0:
        return 0.0
    m4 = 0.0
    for i in range(m):
        d = (x[idx[i]] - mean) / sdev
        m4 += d * d * d * d
    return m4 / m


def _subset_indices(matrix: ColumnMatrix, subset: RowSubset | None, col: int) -> np.ndarray:
    if not 0 <= col < matrix.cols:
        raise ContractError(f"column {col} out of range for {matrix.cols} columns")
    if subset is None:
        return np.arange(matrix.rows, dtype=np.int64)
    idx = subset.indices
    if idx.size == 0:
        raise ContractError("statistics of an empty subset are undefined")
    if idx.max() >= matrix.rows:
        raise ContractError("subset refers to rows outside the matrix")
    return idx


def column_stats(matrix: ColumnMatrix, subset: RowSubset | None, col: int) -> ColumnStats:
    """Population mean/sdev and range of one column over the subset's rows."""
    idx = _subset_indices(matrix, subset, col)
    x = matrix.column(col)
    mean, sdev = _mean_sdev(x, idx)
    lo, hi = _min_max(x, idx)
    distinct = bool(lo != hi)
    if not distinct:
        # rounding in the mean can leave a tiny residual on constant columns
        sdev = 0.0
    return ColumnStats(mean=float(mean), sdev=float(sdev), min=float(lo), max=float(hi), distinct_gt1=distinct)


def kurtosis(matrix: ColumnMatrix, subset: RowSubset | None, col: int) -> float:
    """Raw (non-excess) kurtosis over the subset, or ``KURTOSIS_NO_SIGNAL``
    for a constant column."""
    idx = _subset_indices(matrix, subset, col)
    if idx.size < 2:
        raise ContractError("kurtosis needs at least 2 rows")
    return float(_raw_kurtosis(matrix.column(col), idx))
