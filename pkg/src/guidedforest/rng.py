"""Deterministic per-tree random streams.

Each tree draws from its own PCG64 stream derived from ``(base_seed, tree_index)``
through :class:`numpy.random.SeedSequence`, so a forest is reproducible no
matter how many threads build it. The jitted kernels consume the same
``numpy.random.Generator`` objects (numba reproduces numpy's draws exactly).
"""

from __future__ import annotations

import numba
import numpy as np

from .data import ContractError, RowSubset

GENERATOR_VERSION = f"PCG64+SeedSequence(base_seed,tree_index)/numpy-{np.__version__}"


class NoEligibleColumn(ValueError):
    """Raised when every weight is zero, i.e. nothing can be selected."""


class RngStream:
    """Single-owner random stream tied to an origin ``(base_seed, tree_index)``."""

    __slots__ = ("origin", "generator")

    def __init__(self, base_seed: int, tree_index: int) -> None:
        self.origin = (int(base_seed), int(tree_index))
        seq = np.random.SeedSequence([_as_entropy(base_seed), _as_entropy(tree_index)])
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"RngStream(base_seed={self.origin[0]}, tree_index={self.origin[1]})"


def _as_entropy(value: int) -> int:
    # SeedSequence rejects negatives; fold them into the unsigned range
    value = int(value)
    return value if value >= 0 else value + (1 << 64)


def derive_stream(base_seed: int, tree_index: int) -> RngStream:
    return RngStream(base_seed, tree_index)


@numba.njit(nogil=True, cache=True)
def weighted_index(rng, weights, total):
    """Inverse-CDF draw over ``weights``; ``total`` must equal their sum and be > 0."""
    u = rng.random() * total
    acc = 0.0
    last = -1
    for i in range(weights.shape[0]):
        w = weights[i]
        if w > 0.0:
            acc += w
            last = i
            if u < acc:
                return i
    # u can land on the total through rounding
    return last


def draw_uniform_index(stream: RngStream, upper: int) -> int:
    if upper < 1:
        raise ContractError("upper bound must be at least 1")
    return int(stream.generator.integers(0, upper))


def draw_weighted_index(stream: RngStream, weights) -> int:
    """Draw index ``i`` with probability ``w_i / sum(w)``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ContractError("weights must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ContractError("weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0.0:
        raise NoEligibleColumn("no eligible column: all weights are zero")
    return int(weighted_index(stream.generator, w, total))


def draw_standard_normal(stream: RngStream) -> float:
    return float(stream.generator.standard_normal())


def sample_without_replacement(stream: RngStream, population: int, k: int) -> RowSubset:
    if k < 0 or k > population:
        raise ContractError(f"cannot draw {k} distinct rows from {population}")
    idx = stream.generator.choice(population, size=k, replace=False)
    return RowSubset(idx, population=population)


def sample_with_replacement(stream: RngStream, population: int, k: int) -> RowSubset:
    if population < 1 or k < 0:
        raise ContractError(f"cannot draw {k} rows from {population}")
    idx = stream.generator.integers(0, population, size=k)
    return RowSubset(idx, population=population, allow_duplicates=True)
