"""Growing a single isolation tree.

Nodes live in flat arrays. ``left[i] == -1`` marks a terminal node whose
``depth[i]`` already includes the extrapolated remainder for the rows it
holds. Internal nodes keep their hyperplane terms in row ``i`` of
``columns``/``coeffs``/``means``/``sdevs`` and route a point left when its
projection is ``<= threshold[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

import numba
import numpy as np

from .data import ColumnMatrix, ContractError, RowSubset
from .depth import DepthFormula, expected_depth_table
from .rng import RngStream
from .split import (
    CRIT_UNIFORM,
    ColumnSelector,
    Hyperplane,
    SplitCriterion,
    _global_weights,
    choose_split_kernel,
    make_workspace,
)


@dataclass(frozen=True)
class TerminationPolicy:
    """When to stop splitting. With neither rule set, trees grow until every
    node holds a single point (or identical points)."""

    max_depth: int | None = None
    gain_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise ContractError("max_depth must be >= 0")
        if self.gain_threshold is not None and not 0.0 <= self.gain_threshold < 1.0:
            raise ContractError("gain_threshold must lie in [0, 1)")

    @property
    def full_isolation(self) -> bool:
        return self.max_depth is None and self.gain_threshold is None


@dataclass(frozen=True)
class Internal:
    hyperplane: Hyperplane
    left: "TreeNode"
    right: "TreeNode"


@dataclass(frozen=True)
class Terminal:
    depth_value: float


TreeNode = Union[Internal, Terminal]


@dataclass(frozen=True, eq=False)
class IsolationTree:
    left: np.ndarray
    right: np.ndarray
    threshold: np.ndarray
    depth: np.ndarray
    columns: np.ndarray
    coeffs: np.ndarray
    means: np.ndarray
    sdevs: np.ndarray
    sample_size: int

    @property
    def node_count(self) -> int:
        return int(self.left.shape[0])

    @property
    def ndim(self) -> int:
        return int(self.columns.shape[1])

    def is_terminal(self, node: int) -> bool:
        return self.left[node] < 0

    def hyperplane(self, node: int) -> Hyperplane:
        if self.is_terminal(node):
            raise ContractError(f"node {node} is terminal")
        return Hyperplane(
            tuple(int(c) for c in self.columns[node]),
            tuple(self.coeffs[node].tolist()),
            tuple(self.means[node].tolist()),
            tuple(self.sdevs[node].tolist()),
            float(self.threshold[node]),
        )

    def terminals(self) -> Iterator[tuple[int, int, float]]:
        """Yield ``(node, tree_depth, depth_value)`` for every terminal node."""
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.left[node] < 0:
                yield node, d, float(self.depth[node])
            else:
                stack.append((int(self.right[node]), d + 1))
                stack.append((int(self.left[node]), d + 1))

    def root(self) -> TreeNode:
        """Nested node view of the tree (built without recursion)."""
        built: dict[int, TreeNode] = {}
        stack = [(0, False)]
        while stack:
            node, expanded = stack.pop()
            if self.left[node] < 0:
                built[node] = Terminal(float(self.depth[node]))
            elif expanded:
                built[node] = Internal(
                    self.hyperplane(node), built.pop(int(self.left[node])), built.pop(int(self.right[node]))
                )
            else:
                stack.append((node, True))
                stack.append((int(self.right[node]), False))
                stack.append((int(self.left[node]), False))
        return built[0]

    def equals(self, other: IsolationTree) -> bool:
        """Bit-exact structural equality."""
        return self.sample_size == other.sample_size and all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=f == "threshold")
            for f in ("left", "right", "threshold", "depth", "columns", "coeffs", "means", "sdevs")
        )


@numba.njit(nogil=True, cache=True)
def _grow(X, idx, p, selector, global_weights, criterion, trials, max_depth, gain_threshold, remainder, rng, ws):
    m = idx.shape[0]
    cap = 2 * m - 1
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    threshold = np.full(cap, np.nan)
    depth = np.zeros(cap)
    columns = np.full((cap, p), -1, dtype=np.int64)
    coeffs = np.zeros((cap, p))
    means = np.zeros((cap, p))
    sdevs = np.zeros((cap, p))
    scratch = np.empty(m, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        a = st_start[top]
        b = st_end[top]
        d = st_depth[top]
        k = b - a
        if k == 1:
            depth[node] = d
            continue
        if max_depth >= 0 and d >= max_depth:
            depth[node] = d + remainder[k]
            continue
        sub = idx[a:b]
        status, s, g = choose_split_kernel(X, sub, p, selector, global_weights, criterion, trials, rng, ws)
        if status != 0:
            depth[node] = d + remainder[k]
            continue
        if criterion != CRIT_UNIFORM and gain_threshold >= 0.0 and g < gain_threshold:
            depth[node] = d + remainder[k]
            continue

        # stable partition of the node's rows by z <= s
        n_left = 0
        n_right = 0
        for i in range(k):
            if ws.z[i] <= s:
                sub[n_left] = sub[i]
                n_left += 1
            else:
                scratch[n_right] = sub[i]
                n_right += 1
        for i in range(n_right):
            sub[n_left + i] = scratch[i]

        threshold[node] = s
        for t in range(p):
            columns[node, t] = ws.cols[t]
            coeffs[node, t] = ws.coef[t]
            means[node, t] = ws.means[t]
            sdevs[node, t] = ws.sdevs[t]
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so the left subtree is grown first
        st_node[top] = right[node]
        st_start[top] = a + n_left
        st_end[top] = b
        st_depth[top] = d + 1
        top += 1
        st_node[top] = left[node]
        st_start[top] = a
        st_end[top] = a + n_left
        st_depth[top] = d + 1
        top += 1

    return (
        left[:n_nodes].copy(), right[:n_nodes].copy(), threshold[:n_nodes].copy(), depth[:n_nodes].copy(),
        columns[:n_nodes].copy(), coeffs[:n_nodes].copy(), means[:n_nodes].copy(), sdevs[:n_nodes].copy(),
    )


@dataclass(frozen=True)
class TreeConfig:
    p: int = 1
    selector: ColumnSelector = ColumnSelector()
    criterion: SplitCriterion = SplitCriterion()
    termination: TerminationPolicy = TerminationPolicy()


def build_tree(
    matrix: ColumnMatrix,
    subset: RowSubset,
    config: TreeConfig,
    stream: RngStream,
    depth_formula: DepthFormula | str | None = None,
    global_weights=None,
    remainder: np.ndarray | None = None,
) -> IsolationTree:
    """Grow one tree on ``subset``'s rows.

    ``depth_formula`` defaults to the one matching the split criterion.
    ``remainder`` may pass a precomputed expected-depth table covering
    ``len(subset)``.
    """
    idx = np.array(subset.indices, dtype=np.int64)
    if idx.size < 1:
        raise ContractError("cannot grow a tree on an empty subset")
    if config.p < 1:
        raise ContractError("p must be >= 1")
    if remainder is None:
        formula = DepthFormula.for_criterion(config.criterion.kind) if depth_formula is None else DepthFormula(depth_formula)
        remainder = expected_depth_table(formula, idx.size)
    term = config.termination
    ws = make_workspace(idx.size, matrix.cols, config.p)
    arrays = _grow(
        matrix.values, idx, config.p, config.selector.kind.code, _global_weights(config.selector, global_weights),
        config.criterion.kind.code, config.criterion.trials,
        -1 if term.max_depth is None else int(term.max_depth),
        -1.0 if term.gain_threshold is None else float(term.gain_threshold),
        remainder, stream.generator, ws,
    )
    return IsolationTree(*arrays, sample_size=int(idx.size))


def count_nodes(tree: IsolationTree) -> int:
    return tree.node_count


def max_tree_depth(tree: IsolationTree) -> int:
    return max((d for _, d, _ in tree.terminals()), default=0)


@numba.njit(nogil=True, cache=True)
def _route(x, left, right, threshold, depth, columns, coeffs, means, sdevs):
    node = 0
    p = columns.shape[1]
    while left[node] >= 0:
        z = 0.0
        for t in range(p):
            j = columns[node, t]
            if j < 0:
                break
            z += coeffs[node, t] * ((x[j] - means[node, t]) / sdevs[node, t])
        if z <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


def terminal_of(point, tree: IsolationTree) -> int:
    """Index of the terminal node ``point`` is routed to."""
    x = np.ascontiguousarray(point, dtype=np.float64)
    return int(
        _route(x, tree.left, tree.right, tree.threshold, tree.depth, tree.columns, tree.coeffs, tree.means, tree.sdevs)
    )


def tree_score(point, tree: IsolationTree) -> float:
    """Depth value of the terminal node that ``point`` lands in."""
    x = np.ascontiguousarray(point, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ContractError("point must be finite")
    if tree.node_count > 1 and x.shape[0] <= int(tree.columns.max()):
        raise ContractError("point has fewer values than the tree uses")
    return float(tree.depth[terminal_of(x, tree)])


__all__ = [
    "Internal",
    "IsolationTree",
    "Terminal",
    "TerminationPolicy",
    "TreeConfig",
    "TreeNode",
    "build_tree",
    "count_nodes",
    "max_tree_depth",
    "terminal_of",
    "tree_score",
]
