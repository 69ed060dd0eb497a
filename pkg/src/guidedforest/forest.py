"""Forest fitting, anomaly scoring and model persistence."""

from __future__ import annotations

import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .data import ColumnMatrix, ContractError, RowSubset, kurtosis
from .depth import DepthFormula, expected_depth, expected_depth_table
from .rng import GENERATOR_VERSION, derive_stream, sample_with_replacement, sample_without_replacement
from .split import ColumnSelector, Criterion, Selector, SplitCriterion
from .tree import IsolationTree, TerminationPolicy, TreeConfig, build_tree

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class NothingToSplit(ValueError):
    """Every column of the training data is constant."""


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters of a forest.

    ``depth_formula=None`` picks the formula matching ``criterion``.
    """

    n_trees: int = 200
    sample_size: int = 256
    ndim: int = 2
    criterion: str = "pooled"
    trials: int = 1
    col_select: str = "uniform"
    weight_scope: str = "node"
    max_depth: int | None = None
    gain_threshold: float | None = None
    depth_formula: str | None = None
    replacement: bool = False

    def __post_init__(self) -> None:
        Criterion(self.criterion)
        Selector(self.col_select)
        if self.depth_formula is not None:
            DepthFormula(self.depth_formula)
        if self.n_trees < 1:
            raise ContractError("n_trees must be >= 1")
        if self.sample_size < 2:
            raise ContractError("sample_size must be >= 2")
        if self.ndim < 1:
            raise ContractError("ndim must be >= 1")
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if self.criterion == "uniform" and self.trials != 1:
            warnings.warn("uniform-random thresholds ignore trials; using 1", stacklevel=3)
            object.__setattr__(self, "trials", 1)
        # validates the termination fields
        TerminationPolicy(self.max_depth, self.gain_threshold)

    @property
    def formula(self) -> DepthFormula:
        if self.depth_formula is None:
            return DepthFormula.for_criterion(self.criterion)
        return DepthFormula(self.depth_formula)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            p=self.ndim,
            selector=ColumnSelector(self.col_select, self.weight_scope),
            criterion=SplitCriterion(self.criterion, self.trials),
            termination=TerminationPolicy(self.max_depth, self.gain_threshold),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ForestConfig:
        return cls(**d)


@dataclass(eq=False)
class ForestModel:
    trees: list[IsolationTree]
    normalizer_q: float
    config: ForestConfig
    base_seed: int
    n_cols: int
    sample_size: int
    generator_version: str = GENERATOR_VERSION
    _packed: tuple | None = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def node_count(self) -> int:
        return sum(t.node_count for t in self.trees)

    def packed(self) -> tuple:
        """All trees concatenated into flat arrays for the scoring kernel."""
        if self._packed is None:
            sizes = np.array([t.node_count for t in self.trees], dtype=np.int64)
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            offsets[1:] = np.cumsum(sizes)
            p = max(t.columns.shape[1] for t in self.trees)

            def cat(name, fill):
                parts = []
                for t in self.trees:
                    a = getattr(t, name)
                    if a.ndim == 2 and a.shape[1] < p:
                        a = np.hstack([a, np.full((a.shape[0], p - a.shape[1]), fill, dtype=a.dtype)])
                    parts.append(a)
                return np.ascontiguousarray(np.concatenate(parts))

            self._packed = (
                offsets, cat("left", -1), cat("right", -1), cat("threshold", 0.0), cat("depth", 0.0),
                cat("columns", -1), cat("coeffs", 0.0), cat("means", 0.0), cat("sdevs", 1.0),
            )
        return self._packed


def _default_threads() -> int:
    return os.cpu_count() or 1


def _global_selector_weights(matrix: ColumnMatrix, config: ForestConfig) -> np.ndarray | None:
    if config.weight_scope != "global" or config.col_select == "uniform":
        return None
    w = np.zeros(matrix.cols)
    for j in range(matrix.cols):
        col = matrix.column(j)
        if config.col_select == "range":
            w[j] = col.max() - col.min()
        elif matrix.rows >= 2:
            w[j] = kurtosis(matrix, None, j)
    return w


def _effective_sample_size(config: ForestConfig, m: int) -> int:
    s = config.sample_size
    if s > m:
        warnings.warn(f"sample size {s} exceeds the {m} available rows; clamped to {m}", stacklevel=3)
        s = m
    return s


def fit_forest(matrix: ColumnMatrix, config: ForestConfig, base_seed: int = 0, threads: int | None = None) -> ForestModel:
    """Grow ``config.n_trees`` trees, tree ``i`` from ``derive_stream(base_seed, i)``.

    Trees are independent, so the result does not depend on ``threads``.
    """
    m = matrix.rows
    if m < 2:
        raise ContractError("need at least 2 rows to fit a forest")
    lo = matrix.values.min(axis=0)
    hi = matrix.values.max(axis=0)
    if np.all(lo == hi):
        raise NothingToSplit("nothing to split: every column is constant")
    s = _effective_sample_size(config, m)
    tree_config = config.tree_config()
    global_w = _global_selector_weights(matrix, config)
    remainder = expected_depth_table(config.formula, s)

    def grow(i: int) -> IsolationTree:
        stream = derive_stream(base_seed, i)
        if config.replacement:
            subset = sample_with_replacement(stream, m, s)
        elif s == m:
            subset = RowSubset.full(m)
        else:
            subset = sample_without_replacement(stream, m, s)
        return build_tree(matrix, subset, tree_config, stream, global_weights=global_w, remainder=remainder)

    threads = threads or _default_threads()
    if threads <= 1:
        trees = [grow(i) for i in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trees = list(ex.map(grow, range(config.n_trees)))
    return ForestModel(
        trees=trees,
        normalizer_q=expected_depth(config.formula, s),
        config=config,
        base_seed=int(base_seed),
        n_cols=matrix.cols,
        sample_size=s,
    )


# ---------------------------------------------------------------- scoring


@numba.njit(nogil=True, cache=True)
def _depth_sums(X, start, stop, offsets, left, right, threshold, depth, columns, coeffs, means, sdevs, out):
    n_trees = offsets.shape[0] - 1
    p = columns.shape[1]
    for i in range(start, stop):
        total = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while left[base + node] >= 0:
                k = base + node
                z = 0.0
                for v in range(p):
                    j = columns[k, v]
                    if j < 0:
                        break
                    z += coeffs[k, v] * ((X[i, j] - means[k, v]) / sdevs[k, v])
                if z <= threshold[k]:
                    node = left[k]
                else:
                    node = right[k]
            total += depth[base + node]
        out[i] = total


def mean_depths(values: np.ndarray, model: ForestModel, threads: int | None = None) -> np.ndarray:
    """Average terminal depth across trees for every row of ``values``."""
    X = np.ascontiguousarray(values, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_cols:
        raise ContractError(f"expected {model.n_cols} columns, got shape {X.shape}")
    packed = model.packed()
    out = np.empty(X.shape[0])
    n = X.shape[0]
    threads = threads or _default_threads()
    if threads <= 1 or n < 2048:
        _depth_sums(X, 0, n, *packed, out)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda k: _depth_sums(X, bounds[k], bounds[k + 1], *packed, out), range(threads)))
    return out / model.n_trees


def normalize(mean_depth, q: float):
    """``2 ** (-mean_depth / q)``: 0.5 at the expected depth, 1 at depth 0."""
    return np.exp2(-np.asarray(mean_depth, dtype=np.float64) / q)


def score_point(point, model: ForestModel) -> float:
    x = np.asarray(point, dtype=np.float64).reshape(1, -1)
    return float(normalize(mean_depths(x, model, threads=1), model.normalizer_q)[0])


def score_matrix(matrix: ColumnMatrix | np.ndarray, model: ForestModel, threads: int | None = None) -> np.ndarray:
    """Anomaly score per row, in input order; higher means more anomalous."""
    values = matrix.values if isinstance(matrix, ColumnMatrix) else np.asarray(matrix, dtype=np.float64)
    return normalize(mean_depths(values, model, threads), model.normalizer_q)


# ----------------------------------------------------------- persistence


@contextmanager
def _recursion_budget(depth: int):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * depth + 1000))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def _tree_to_obj(tree: IsolationTree) -> dict:
    objs: dict[int, dict] = {}
    stack = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if tree.left[node] < 0:
            objs[node] = {"depth": float(tree.depth[node])}
        elif expanded:
            objs[node] = {
                "columns": [int(c) for c in tree.columns[node]],
                "coeffs": tree.coeffs[node].tolist(),
                "means": tree.means[node].tolist(),
                "sdevs": tree.sdevs[node].tolist(),
                "threshold": float(tree.threshold[node]),
                "left": objs.pop(int(tree.left[node])),
                "right": objs.pop(int(tree.right[node])),
            }
        else:
            stack.append((node, True))
            stack.append((int(tree.right[node]), False))
            stack.append((int(tree.left[node]), False))
    return objs[0]


def _tree_from_obj(obj: dict, sample_size: int, p: int) -> IsolationTree:
    # node ids follow the builder's numbering: children get consecutive ids
    # when their parent is split, parents are split in depth-first order
    left, right, thr, dep = [], [], [], []
    cols, coef, mean, sdev = [], [], [], []

    def new_node():
        left.append(-1)
        right.append(-1)
        thr.append(np.nan)
        dep.append(0.0)
        cols.append([-1] * p)
        coef.append([0.0] * p)
        mean.append([0.0] * p)
        sdev.append([0.0] * p)
        return len(left) - 1

    stack = [(obj, new_node())]
    while stack:
        o, node = stack.pop()
        if "depth" in o:
            dep[node] = float(o["depth"])
            continue
        cols[node] = [int(c) for c in o["columns"]]
        coef[node] = [float(v) for v in o["coeffs"]]
        mean[node] = [float(v) for v in o["means"]]
        sdev[node] = [float(v) for v in o["sdevs"]]
        thr[node] = float(o["threshold"])
        left[node] = new_node()
        right[node] = new_node()
        stack.append((o["right"], right[node]))
        stack.append((o["left"], left[node]))
    return IsolationTree(
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        threshold=np.array(thr, dtype=np.float64),
        depth=np.array(dep, dtype=np.float64),
        columns=np.array(cols, dtype=np.int64).reshape(-1, p),
        coeffs=np.array(coef, dtype=np.float64).reshape(-1, p),
        means=np.array(mean, dtype=np.float64).reshape(-1, p),
        sdevs=np.array(sdev, dtype=np.float64).reshape(-1, p),
        sample_size=sample_size,
    )


def model_to_json(model: ForestModel) -> str:
    """Versioned JSON document; floats are written in shortest round-trip form."""
    doc = {
        "format_version": FORMAT_VERSION,
        "generator_version": model.generator_version,
        "base_seed": model.base_seed,
        "config": model.config.to_dict(),
        "q": model.normalizer_q,
        "n_cols": model.n_cols,
        "sample_size": model.sample_size,
        "trees": [_tree_to_obj(t) for t in model.trees],
    }
    depth = max((t.node_count for t in model.trees), default=1)
    with _recursion_budget(depth):
        return json.dumps(doc, allow_nan=False)


def model_from_json(text: str) -> ForestModel:
    with _recursion_budget(len(text) // 16):
        doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    config = ForestConfig.from_dict(doc["config"])
    s = int(doc["sample_size"])
    trees = [_tree_from_obj(t, s, config.ndim) for t in doc["trees"]]
    if doc["generator_version"] != GENERATOR_VERSION:
        logger.warning("model was built with %s, running %s", doc["generator_version"], GENERATOR_VERSION)
    return ForestModel(
        trees=trees,
        normalizer_q=float(doc["q"]),
        config=config,
        base_seed=int(doc["base_seed"]),
        n_cols=int(doc["n_cols"]),
        sample_size=s,
        generator_version=doc["generator_version"],
    )


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    return model_from_json(Path(path).read_text(encoding="utf-8"))


PRESETS: dict[str, ForestConfig] = {
    "fcf": ForestConfig(n_trees=200, sample_size=256, ndim=2, criterion="pooled", trials=1),
    "iforest": ForestConfig(n_trees=100, sample_size=256, ndim=1, criterion="uniform", trials=1, max_depth=8),
    "sciforest-like": ForestConfig(
        n_trees=100, sample_size=256, ndim=2, criterion="averaged", trials=10, max_depth=8
    ),
    "custom": ForestConfig(),
}


def preset(name: str, **overrides) -> ForestConfig:
    """Named hyperparameter set with field overrides applied on top.

    For ``iforest`` the depth cap follows the sample size (``ceil(log2(s))``,
    8 at 256) unless ``max_depth`` is given explicitly.
    """
    if name not in PRESETS:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "iforest" and "sample_size" in overrides and "max_depth" not in overrides:
        overrides["max_depth"] = max(1, math.ceil(math.log2(overrides["sample_size"])))
    return replace(PRESETS[name], **overrides)


__all__ = [
    "DepthFormula",
    "ForestConfig",
    "ForestModel",
    "NothingToSplit",
    "PRESETS",
    "expected_depth",
    "fit_forest",
    "load_model",
    "mean_depths",
    "model_from_json",
    "model_to_json",
    "normalize",
    "preset",
    "save_model",
    "score_matrix",
    "score_point",
]
