"""Split selection at a single node.

A split is a threshold on a random linear combination of standardized
columns::

    z = sum_v c_v * (x_v - mean_v) / sdev_v

The threshold is either drawn uniformly within the range of ``z`` (plain
isolation forest) or placed at the boundary that maximizes a standard
deviation gain on ``z``:

* pooled gain:   (sd_all - (n_l * sd_l + n_r * sd_r) / (n_l + n_r)) / sd_all
* averaged gain: (sd_all - (sd_l + sd_r) / 2) / sd_all

The jitted kernels here are shared with the tree builder.
"""

from __future__ import annotations

import collections
import enum
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import ColumnMatrix, ContractError, RowSubset, _mean_sdev, _min_max, _raw_kurtosis
from .rng import RngStream, weighted_index

CRIT_UNIFORM = 0
CRIT_POOLED = 1
CRIT_AVERAGED = 2

SEL_UNIFORM = 0
SEL_KURTOSIS = 1
SEL_RANGE = 2

# Two boundaries whose gains differ by less than this are considered tied.
GAIN_TIE_EPS = 1e-12


class AllColumnsConstant(ValueError):
    """Every column holds a single distinct value over the node's rows."""


class ConstantProjection(ValueError):
    """The projection takes a single value, so no threshold separates the rows."""


class Criterion(str, enum.Enum):
    UNIFORM = "uniform"
    POOLED = "pooled"
    AVERAGED = "averaged"

    @property
    def code(self) -> int:
        return {"uniform": CRIT_UNIFORM, "pooled": CRIT_POOLED, "averaged": CRIT_AVERAGED}[self.value]


class Selector(str, enum.Enum):
    UNIFORM = "uniform"
    KURTOSIS = "kurtosis"
    RANGE = "range"

    @property
    def code(self) -> int:
        return {"uniform": SEL_UNIFORM, "kurtosis": SEL_KURTOSIS, "range": SEL_RANGE}[self.value]


@dataclass(frozen=True)
class SplitCriterion:
    kind: Criterion = Criterion.POOLED
    trials: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Criterion(self.kind))
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if self.kind is Criterion.UNIFORM and self.trials != 1:
            warnings.warn("uniform-random thresholds have no score to compare; using trials=1", stacklevel=3)
            object.__setattr__(self, "trials", 1)


@dataclass(frozen=True)
class ColumnSelector:
    """How columns are picked for a hyperplane.

    ``scope="node"`` recomputes kurtosis/range weights on each node's rows;
    ``scope="global"`` computes them once on the full training matrix (only
    columns that vary at the node stay eligible either way).
    """

    kind: Selector = Selector.UNIFORM
    scope: str = "node"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Selector(self.kind))
        if self.scope not in ("node", "global"):
            raise ContractError(f"unknown selector scope {self.scope!r}")


@dataclass(frozen=True)
class Hyperplane:
    columns: tuple[int, ...]
    coeffs: tuple[float, ...]
    means: tuple[float, ...]
    sdevs: tuple[float, ...]
    threshold: float = math.nan

    def __post_init__(self) -> None:
        p = len(self.columns)
        if p < 1 or not (len(self.coeffs) == len(self.means) == len(self.sdevs) == p):
            raise ContractError("hyperplane term lists must be non-empty and of equal length")
        if any(not s > 0 for s in self.sdevs):
            raise ContractError("hyperplane standard deviations must be positive")

    def project(self, values: np.ndarray) -> np.ndarray:
        """Projection of each row of a 2-d array (or of a single 1-d point)."""
        x = np.asarray(values, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        z = np.zeros(x.shape[0])
        for col, c, mu, sd in zip(self.columns, self.coeffs, self.means, self.sdevs):
            z += c * ((x[:, col] - mu) / sd)
        return z[0] if single else z

    def with_threshold(self, threshold: float) -> Hyperplane:
        return Hyperplane(self.columns, self.coeffs, self.means, self.sdevs, float(threshold))


@dataclass(frozen=True)
class SplitResult:
    hyperplane: Hyperplane
    gain: float | None
    left_rows: RowSubset
    right_rows: RowSubset
    projections: np.ndarray = field(repr=False, compare=False, default=None)


# ---------------------------------------------------------------- kernels


@numba.njit(nogil=True, cache=True)
def column_weights(X, idx, selector, global_weights, weights, eligible):
    """Fill per-column selection weights for the rows ``idx``.

    Columns with a single distinct value get weight 0. Returns the number of
    eligible columns (listed first in ``eligible``) and the weight total.
    """
    n = X.shape[1]
    n_elig = 0
    total = 0.0
    use_global = global_weights.shape[0] > 0
    for j in range(n):
        x = X[:, j]
        lo, hi = _min_max(x, idx)
        w = 0.0
        if lo != hi:
            if use_global:
                w = global_weights[j]
            elif selector == SEL_KURTOSIS:
                w = _raw_kurtosis(x, idx)
            elif selector == SEL_RANGE:
                w = hi - lo
            else:
                w = 1.0
            if not (w > 0.0 and w < np.inf):
                w = 0.0
        weights[j] = w
        if w > 0.0:
            eligible[n_elig] = j
            n_elig += 1
            total += w
    return n_elig, total


@numba.njit(nogil=True, cache=True)
def build_projection(X, idx, p, selector, weights, total, eligible, n_elig, rng, cols, coef, means, sdevs, z):
    """Draw ``p`` (column, coefficient) terms and accumulate the projection of
    the rows ``idx`` into ``z``. Returns False if a drawn column turned out to
    have zero spread."""
    m = idx.shape[0]
    for i in range(m):
        z[i] = 0.0
    for k in range(p):
        if selector == SEL_UNIFORM:
            j = eligible[rng.integers(0, n_elig)]
        else:
            j = weighted_index(rng, weights, total)
        c = rng.standard_normal()
        x = X[:, j]
        mu, sd = _mean_sdev(x, idx)
        if not sd > 0.0:
            return False
        cols[k] = j
        coef[k] = c
        means[k] = mu
        sdevs[k] = sd
        for i in range(m):
            z[i] += c * ((x[idx[i]] - mu) / sd)
    return True


@numba.njit(nogil=True, cache=True)
def _side_gain(criterion, sd_all, n_left, sd_left, n_right, sd_right):
    if criterion == CRIT_POOLED:
        pooled = (n_left * sd_left + n_right * sd_right) / (n_left + n_right)
        return (sd_all - pooled) / sd_all
    return (sd_all - 0.5 * (sd_left + sd_right)) / sd_all


@numba.njit(nogil=True, cache=True)
def best_split_kernel(z, m, criterion, rng, sorted_buf, left_sd, right_sd):
    """Threshold for the first ``m`` entries of ``z``.

    Returns ``(ok, threshold, gain, boundary)``; ``boundary`` is the number of
    sorted values on the left side (-1 for uniform-random thresholds).
    """
    if criterion == CRIT_UNIFORM:
        lo = z[0]
        hi = z[0]
        for i in range(1, m):
            if z[i] < lo:
                lo = z[i]
            elif z[i] > hi:
                hi = z[i]
        if not lo < hi:
            return False, np.nan, np.nan, -1
        while True:
            s = lo + rng.random() * (hi - lo)
            if s < hi:
                return True, s, np.nan, -1

    zs = sorted_buf[:m]
    zs[:] = np.sort(z[:m])
    if not zs[0] < zs[m - 1]:
        return False, np.nan, np.nan, -1

    # running (Welford) spreads of every prefix and suffix
    mean = 0.0
    m2 = 0.0
    for i in range(m):
        d = zs[i] - mean
        mean += d / (i + 1)
        m2 += d * (zs[i] - mean)
        left_sd[i] = math.sqrt(max(m2, 0.0) / (i + 1))
    sd_all = left_sd[m - 1]
    mean = 0.0
    m2 = 0.0
    for k in range(m):
        i = m - 1 - k
        d = zs[i] - mean
        mean += d / (k + 1)
        m2 += d * (zs[i] - mean)
        right_sd[i] = math.sqrt(max(m2, 0.0) / (k + 1))

    best_gain = -np.inf
    best_i = -1
    for i in range(m - 1):
        if zs[i] < zs[i + 1]:
            g = _side_gain(criterion, sd_all, i + 1.0, left_sd[i], m - i - 1.0, right_sd[i + 1])
            if g > best_gain + GAIN_TIE_EPS:
                best_gain = g
                best_i = i
    a = zs[best_i]
    b = zs[best_i + 1]
    s = a + 0.5 * (b - a)
    if not s < b:
        s = a
    best_gain = min(max(best_gain, 0.0), 1.0)
    return True, s, best_gain, best_i + 1


@numba.njit(nogil=True, cache=True)
def choose_split_kernel(X, idx, p, selector, global_weights, criterion, trials, rng, ws):
    """Best of ``trials`` candidate hyperplanes for the rows ``idx``.

    Returns ``(status, threshold, gain)`` with status 0 = split found,
    1 = all columns constant, 2 = every candidate projection was constant.
    The winning terms and projections are left in ``ws``.
    """
    m = idx.shape[0]
    n_elig, total = column_weights(X, idx, selector, global_weights, ws.weights, ws.eligible)
    if n_elig == 0:
        return 1, np.nan, np.nan
    found = False
    best_s = np.nan
    best_g = np.nan
    for t in range(trials):
        ok = build_projection(
            X, idx, p, selector, ws.weights, total, ws.eligible, n_elig, rng,
            ws.cols_try, ws.coef_try, ws.mean_try, ws.sdev_try, ws.z_try,
        )
        if not ok:
            continue
        ok, s, g, _ = best_split_kernel(ws.z_try, m, criterion, rng, ws.sorted_buf, ws.left_sd, ws.right_sd)
        if not ok:
            continue
        if not found or (criterion != CRIT_UNIFORM and g > best_g):
            found = True
            best_s = s
            best_g = g
            ws.cols[:p] = ws.cols_try[:p]
            ws.coef[:p] = ws.coef_try[:p]
            ws.means[:p] = ws.mean_try[:p]
            ws.sdevs[:p] = ws.sdev_try[:p]
            ws.z[:m] = ws.z_try[:m]
    if not found:
        return 2, np.nan, np.nan
    return 0, best_s, best_g


Workspace = collections.namedtuple(
    "Workspace",
    "weights eligible cols_try coef_try mean_try sdev_try z_try cols coef means sdevs z sorted_buf left_sd right_sd",
)


def make_workspace(m: int, n: int, p: int) -> Workspace:
    """Scratch buffers for splitting up to ``m`` rows of an ``n``-column matrix
    with ``p`` terms per hyperplane."""
    return Workspace(
        np.zeros(n), np.zeros(n, dtype=np.int64),
        np.zeros(p, dtype=np.int64), np.zeros(p), np.zeros(p), np.zeros(p), np.zeros(m),
        np.zeros(p, dtype=np.int64), np.zeros(p), np.zeros(p), np.zeros(p), np.zeros(m),
        np.zeros(m), np.zeros(m), np.zeros(m),
    )


# ------------------------------------------------------------- python API


def _check_node(matrix: ColumnMatrix, subset: RowSubset) -> np.ndarray:
    idx = subset.indices
    if idx.size < 2:
        raise ContractError("a split needs at least 2 rows")
    if idx.max() >= matrix.rows:
        raise ContractError("subset refers to rows outside the matrix")
    return np.ascontiguousarray(idx, dtype=np.int64)


def _global_weights(selector: ColumnSelector, global_weights) -> np.ndarray:
    if global_weights is None or selector.scope == "node" or selector.kind is Selector.UNIFORM:
        return np.empty(0)
    return np.ascontiguousarray(global_weights, dtype=np.float64)


def build_hyperplane(
    matrix: ColumnMatrix,
    subset: RowSubset,
    p: int,
    selector: ColumnSelector,
    stream: RngStream,
    global_weights=None,
) -> tuple[Hyperplane, np.ndarray]:
    """Draw a random hyperplane over the node's rows.

    Returns the hyperplane (threshold unset) and the projection of every row
    of ``subset``, in subset order.
    """
    if p < 1:
        raise ContractError("p must be >= 1")
    idx = _check_node(matrix, subset)
    X = matrix.values
    ws = make_workspace(idx.size, matrix.cols, p)
    n_elig, total = column_weights(
        X, idx, selector.kind.code, _global_weights(selector, global_weights), ws.weights, ws.eligible
    )
    if n_elig == 0:
        raise AllColumnsConstant("all columns constant")
    ok = build_projection(
        X, idx, p, selector.kind.code, ws.weights, total, ws.eligible, n_elig, stream.generator,
        ws.cols, ws.coef, ws.means, ws.sdevs, ws.z,
    )
    if not ok:
        raise AllColumnsConstant("drawn column has zero spread")
    hp = Hyperplane(
        tuple(int(c) for c in ws.cols), tuple(ws.coef.tolist()), tuple(ws.means.tolist()), tuple(ws.sdevs.tolist())
    )
    return hp, ws.z.copy()


def _sides(z, split_value):
    z = np.asarray(z, dtype=np.float64)
    left = z[z <= split_value]
    right = z[z > split_value]
    if left.size == 0 or right.size == 0:
        raise ContractError("split value leaves one side empty")
    return z, left, right


def pooled_objective(projections, split_value: float) -> float:
    """Count-weighted mean of the two sides' population standard deviations."""
    _, left, right = _sides(projections, split_value)
    return float((left.size * left.std() + right.size * right.std()) / (left.size + right.size))


def _gain(projections, split_value, pooled: bool) -> float:
    sd_all = np.asarray(projections, dtype=np.float64).std()
    if not sd_all > 0:
        raise ConstantProjection("constant projection")
    z, left, right = _sides(projections, split_value)
    if pooled:
        inner = (left.size * left.std() + right.size * right.std()) / z.size
    else:
        inner = 0.5 * (left.std() + right.std())
    return float(min(max((sd_all - inner) / sd_all, 0.0), 1.0))


def pooled_gain(projections, split_value: float) -> float:
    return _gain(projections, split_value, pooled=True)


def averaged_gain(projections, split_value: float) -> float:
    return _gain(projections, split_value, pooled=False)


def best_split(projections, criterion: SplitCriterion, stream: RngStream | None = None) -> tuple[float, float | None]:
    """Threshold (and gain, ``None`` for uniform-random) for a projection vector.

    Gain criteria scan every boundary between consecutive distinct sorted
    values and put the threshold at the midpoint of the best one; ties go to
    the smallest threshold.
    """
    z = np.ascontiguousarray(projections, dtype=np.float64)
    m = z.size
    if m < 2:
        raise ConstantProjection("need at least 2 projections")
    code = criterion.kind.code
    if code == CRIT_UNIFORM and stream is None:
        raise ContractError("uniform-random thresholds need a random stream")
    rng = stream.generator if stream is not None else np.random.default_rng(0)
    ok, s, g, _ = best_split_kernel(z, m, code, rng, np.empty(m), np.empty(m), np.empty(m))
    if not ok:
        raise ConstantProjection("constant projection")
    return float(s), (None if code == CRIT_UNIFORM else float(g))


def choose_split(
    matrix: ColumnMatrix,
    subset: RowSubset,
    p: int,
    selector: ColumnSelector,
    criterion: SplitCriterion,
    stream: RngStream,
    global_weights=None,
) -> SplitResult:
    """Run ``criterion.trials`` hyperplane draws and keep the highest-gain one."""
    if p < 1:
        raise ContractError("p must be >= 1")
    idx = _check_node(matrix, subset)
    ws = make_workspace(idx.size, matrix.cols, p)
    status, s, g = choose_split_kernel(
        matrix.values, idx, p, selector.kind.code, _global_weights(selector, global_weights),
        criterion.kind.code, criterion.trials, stream.generator, ws,
    )
    if status == 1:
        raise AllColumnsConstant("all columns constant")
    if status == 2:
        raise ConstantProjection("constant projection on every trial")
    hp = Hyperplane(
        tuple(int(c) for c in ws.cols), tuple(ws.coef.tolist()), tuple(ws.means.tolist()),
        tuple(ws.sdevs.tolist()), float(s),
    )
    z = ws.z[: idx.size].copy()
    go_left = z <= s
    return SplitResult(
        hyperplane=hp,
        gain=None if criterion.kind is Criterion.UNIFORM else float(g),
        left_rows=RowSubset(idx[go_left], allow_duplicates=True),
        right_rows=RowSubset(idx[~go_left], allow_duplicates=True),
        projections=z,
    )
