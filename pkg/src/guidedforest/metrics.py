"""Ranking metrics against binary outlier labels (1 = outlier)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class SingleClassError(ValueError):
    """Labels contain only one class, so ranking metrics are undefined."""


@dataclass(frozen=True)
class LabeledScores:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels).ravel()
        if s.shape != y.shape:
            raise ValueError(f"{s.size} scores but {y.size} labels")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        y = y.astype(np.int8)
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == y.size:
            raise SingleClassError("both classes must be present")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())


def _as_labeled(data, labels=None) -> LabeledScores:
    if isinstance(data, LabeledScores):
        return data
    return LabeledScores(np.asarray(data), np.asarray(labels))


def auroc(data, labels=None) -> float:
    """P(random outlier scores above random inlier), ties counting one half."""
    d = _as_labeled(data, labels)
    ranks = rankdata(d.scores, method="average")
    n_pos, n_neg = d.n_pos, d.n_neg
    u = ranks[d.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(data, labels=None) -> float:
    """Average precision: sum of precision x recall increment over descending
    distinct score thresholds (tied scores enter together)."""
    d = _as_labeled(data, labels)
    order = np.argsort(-d.scores, kind="stable")
    s = d.scores[order]
    y = d.labels[order]
    # last position of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends].astype(np.float64)
    seen = ends + 1.0
    precision = tp / seen
    recall_step = np.diff(np.r_[0.0, tp]) / d.n_pos
    return float(np.sum(precision * recall_step))
