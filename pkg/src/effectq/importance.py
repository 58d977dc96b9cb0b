"""Markov importance source over finite, ordered usefulness levels.

Candidate status updates carry a usefulness rank drawn from a finite set of
normalized levels in [0, 1]. The rank evolves as a discrete-time Markov
chain; the uniform instantiation (equispaced levels, equiprobable moves) is
what the reference experiments use. All objects here are immutable and every
random draw flows through an explicitly passed generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StationaryDistributionError

ROW_SUM_TOL = 1e-9
RANK_TOL = 1e-9


@dataclass(frozen=True)
class ImportanceLevels:
    """Ordered usefulness levels, normalized to [0, 1]."""

    values: np.ndarray

    def __init__(self, values: Sequence[float]) -> None:
        arr = np.array(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("levels must be a nonempty 1-D sequence")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("levels must lie within [0, 1]")
        if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
            raise ValueError("levels must be strictly increasing")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def display(self) -> list[float]:
        """Levels rounded to two decimals, the form used in reports."""
        return [round(float(v), 2) for v in self.values]


def build_uniform_levels(count: int) -> ImportanceLevels:
    """``count`` equispaced levels i/(count-1); internal values stay exact."""
    if count < 2:
        raise ValueError("uniform levels need count >= 2")
    return ImportanceLevels(np.arange(count, dtype=float) / (count - 1))


@dataclass(frozen=True)
class ImportanceChain:
    """A finite Markov chain over importance levels.

    Construction checks shape only, so that an ill-formed matrix can still be
    inspected through :func:`validate_chain`. Model builders are expected to
    reject chains whose validation report is nonempty.
    """

    levels: ImportanceLevels
    matrix: np.ndarray

    def __init__(self, levels: ImportanceLevels, matrix) -> None:
        mat = np.array(matrix, dtype=float)
        k = len(levels)
        if mat.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}, got {mat.shape}")
        mat.flags.writeable = False
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "matrix", mat)

    def __len__(self) -> int:
        return len(self.levels)


def build_uniform_chain(levels: ImportanceLevels) -> ImportanceChain:
    """Equiprobable transitions: every row is 1/k."""
    k = len(levels)
    return ImportanceChain(levels, np.full((k, k), 1.0 / k))


@dataclass(frozen=True)
class ChainViolation:
    kind: str
    row: int | None
    detail: str


def validate_chain(chain: ImportanceChain) -> list[ChainViolation]:
    """Report stochasticity violations; an empty list means the chain is valid."""
    out: list[ChainViolation] = []
    mat = chain.matrix
    for i, row in enumerate(mat):
        if np.any(row < -RANK_TOL) or np.any(row > 1.0 + RANK_TOL):
            out.append(ChainViolation("range", i, f"row {i} has entries outside [0, 1]"))
        s = float(row.sum())
        if abs(s - 1.0) > ROW_SUM_TOL:
            out.append(ChainViolation("row-sum", i, f"row {i} sums to {s!r}, expected 1"))
    return out


def next_index_from_uniform(cumulative_row: np.ndarray, u: float) -> int:
    """Inverse-CDF step: map a uniform draw through a precomputed cumsum row."""
    idx = int(np.searchsorted(cumulative_row, u, side="right"))
    return min(idx, cumulative_row.size - 1)


def sample_next(chain: ImportanceChain, current: int, rng: np.random.Generator) -> int:
    """Draw the successor level index from the row of ``current``."""
    k = len(chain)
    if not 0 <= current < k:
        raise ValueError(f"level index {current} out of range [0, {k})")
    cum = np.cumsum(chain.matrix[current])
    return next_index_from_uniform(cum, rng.random())


def stationary_distribution(chain: ImportanceChain) -> np.ndarray:
    """Solve rho P = rho, sum(rho) = 1 by a dense linear system.

    Raises StationaryDistributionError when the kernel of (P^T - I) has
    dimension other than one, i.e. the chain is reducible into several
    closed classes (or the matrix is not a proper kernel at all).
    """
    if validate_chain(chain):
        raise StationaryDistributionError("chain is not row-stochastic")
    p = chain.matrix
    n = p.shape[0]
    a = p.T - np.eye(n)
    svals = np.linalg.svd(a, compute_uv=False)
    nullity = int(np.sum(svals <= 1e-9))
    if nullity != 1:
        raise StationaryDistributionError(
            f"stationary distribution is not unique (kernel dimension {nullity})"
        )
    m = np.vstack([a[:-1], np.ones(n)])
    b = np.zeros(n)
    b[-1] = 1.0
    rho = np.linalg.solve(m, b)
    rho = np.where(np.abs(rho) < 1e-15, 0.0, rho)
    return rho
