"""Isolation forests with uniform, averaged-gain and pooled-gain split guiding."""

from .data import ColumnMatrix, ColumnStats, ContractError, RowSubset, column_stats, kurtosis
from .depth import DepthFormula, expected_depth, expected_depth_table
from .forest import (
    PRESETS,
    ForestConfig,
    ForestModel,
    NothingToSplit,
    fit_forest,
    load_model,
    model_from_json,
    model_to_json,
    preset,
    save_model,
    score_matrix,
    score_point,
)
from .io import LabeledDataset, SyntheticSpec, gen_synthetic, load_csv, score_grid, write_csv
from .metrics import SingleClassError, aupr, auroc
from .split import ColumnSelector, Hyperplane, SplitCriterion, averaged_gain, best_split, choose_split, pooled_gain
from .tree import IsolationTree, TerminationPolicy, TreeConfig, build_tree, tree_score

__version__ = "0.1.0"

__all__ = [
    "aupr",
    "auroc",
    "averaged_gain",
    "best_split",
    "build_tree",
    "choose_split",
    "column_stats",
    "ColumnMatrix",
    "ColumnSelector",
    "ColumnStats",
    "ContractError",
    "DepthFormula",
    "expected_depth",
    "expected_depth_table",
    "fit_forest",
    "ForestConfig",
    "ForestModel",
    "gen_synthetic",
    "Hyperplane",
    "IsolationTree",
    "kurtosis",
    "LabeledDataset",
    "load_csv",
    "load_model",
    "model_from_json",
    "model_to_json",
    "NothingToSplit",
    "pooled_gain",
    "preset",
    "PRESETS",
    "RowSubset",
    "save_model",
    "score_grid",
    "score_matrix",
    "score_point",
    "SingleClassError",
    "SplitCriterion",
    "SyntheticSpec",
    "TerminationPolicy",
    "tree_score",
    "TreeConfig",
    "write_csv",
]
