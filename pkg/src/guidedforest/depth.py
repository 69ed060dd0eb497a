"""Expected isolation depth of ``m`` uniformly distributed points.

Used both as the remainder added to non-isolated terminal nodes and as the
score normalizer. Which formula applies depends on how thresholds are chosen:

* harmonic (uniform-random thresholds): ``2 * (H_m - 1)``
* averaged gain, which peels one point per split: ``(m(m+1)/2 - 1) / m``
* pooled gain, which halves the node:
  ``E(m) = 1 + (floor(m/2)/m) E(floor(m/2)) + (ceil(m/2)/m) E(ceil(m/2))``,
  equal to ``log2(m)`` at powers of two.
"""

from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np
from scipy.special import digamma

from .data import ContractError

_EXACT_HARMONIC_LIMIT = 1 << 16


class DepthFormula(str, enum.Enum):
    HARMONIC = "harmonic"
    AVERAGED = "averaged"
    POOLED = "pooled"

    @classmethod
    def for_criterion(cls, criterion: str) -> DepthFormula:
        return {"uniform": cls.HARMONIC, "averaged": cls.AVERAGED, "pooled": cls.POOLED}[str(getattr(criterion, "value", criterion))]


def _harmonic_number(m: int) -> float:
    if m <= _EXACT_HARMONIC_LIMIT:
        return math.fsum(1.0 / i for i in range(1, m + 1))
    return float(digamma(m + 1.0) + np.euler_gamma)


@lru_cache(maxsize=None)
def _pooled_depth(m: int) -> float:
    if m <= 1:
        return 0.0
    lo, hi = m // 2, m - m // 2
    return 1.0 + (lo / m) * _pooled_depth(lo) + (hi / m) * _pooled_depth(hi)


def expected_depth(formula: DepthFormula | str, m: int) -> float:
    formula = DepthFormula(formula)
    m = int(m)
    if m < 1:
        raise ContractError("expected depth needs m >= 1")
    if m == 1:
        return 0.0
    if formula is DepthFormula.HARMONIC:
        return 2.0 * (_harmonic_number(m) - 1.0)
    if formula is DepthFormula.AVERAGED:
        return (m * (m + 1) / 2.0 - 1.0) / m
    return _pooled_depth(m)


def expected_depth_table(formula: DepthFormula | str, upto: int) -> np.ndarray:
    """``table[k] = expected_depth(formula, k)`` for ``k = 1..upto``; ``table[0] = 0``."""
    formula = DepthFormula(formula)
    upto = max(int(upto), 1)
    table = np.zeros(upto + 1)
    k = np.arange(1, upto + 1, dtype=np.float64)
    if formula is DepthFormula.HARMONIC:
        table[1:] = 2.0 * (np.cumsum(1.0 / k) - 1.0)
    elif formula is DepthFormula.AVERAGED:
        table[1:] = (k * (k + 1.0) / 2.0 - 1.0) / k
    else:
        for i in range(2, upto + 1):
            lo, hi = i // 2, i - i // 2
            table[i] = 1.0 + (lo / i) * table[lo] + (hi / i) * table[hi]
    table[1] = 0.0
    return table
