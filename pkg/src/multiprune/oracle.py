"""Brute-force references: constrained least squares and exhaustive masks.

These deliberately avoid the production solver's derivation. The production
path eliminates the constraints through a dual/multiplier form on ``Ginv``;
here the pinned coordinates are substituted directly and the free block of
the *forward* matrix ``G`` is solved with a general LU factorization. When
both agree, the agreement is evidence rather than tautology.

Shipped with the artifact (not test-only) so novel configurations can be
self-certified via the ``verify`` CLI command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import SingularSubmatrix, TooManyCombinations

DEFAULT_COMBINATION_LIMIT = 20_000


@dataclass(frozen=True)
class OracleResult:
    delta: np.ndarray
    error: float
    method: str


def row_least_squares(w_row, pruned: Sequence[int], G) -> OracleResult:
    """Minimize ``0.5 * d G d^T`` over row updates with ``d[P] = -w[P]`` pinned.

    Solves the normal equations on the unpruned block:
    ``G[U,U] d_U = G[U,P] w_P`` with ``U`` the complement of ``P``.
    """
    w_row = np.asarray(w_row, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    m = w_row.size
    idx = np.asarray(sorted(int(p) for p in pruned), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= m):
        raise ValueError(f"pruned index out of range for row of size {m}")
    if np.unique(idx).size != idx.size:
        raise ValueError("pruned indices contain duplicates")

    delta = np.zeros(m, dtype=np.float64)
    if idx.size == 0:
        return OracleResult(delta=delta, error=0.0, method="normal_equations")

    delta[idx] = -w_row[idx]
    free = np.setdiff1d(np.arange(m), idx, assume_unique=True)
    if free.size:
        rhs = G[np.ix_(free, idx)] @ w_row[idx]
        try:
            delta[free] = np.linalg.solve(G[np.ix_(free, free)], rhs)
        except np.linalg.LinAlgError as exc:
            cond = float(np.linalg.cond(G[np.ix_(free, free)]))
            raise SingularSubmatrix("free block of the statistic is singular", cond) from exc
    error = 0.5 * float(delta @ G @ delta)
    return OracleResult(delta=delta, error=max(error, 0.0), method="normal_equations")


def exhaustive_best_mask(
    w_row, G, k: int, limit: int = DEFAULT_COMBINATION_LIMIT
) -> tuple[tuple[int, ...], float]:
    """Globally optimal size-``k`` pruned set for one row, by enumeration.

    Ties are broken lexicographically (the first minimizer in combination
    order wins). Guarded by ``limit`` on the number of candidate subsets.
    """
    w_row = np.asarray(w_row, dtype=np.float64)
    m = w_row.size
    if k < 0 or k > m:
        raise ValueError(f"subset size {k} out of range for row of size {m}")
    if k == 0:
        return (), 0.0
    n_subsets = math.comb(m, k)
    if n_subsets > limit:
        raise TooManyCombinations(
            f"C({m},{k}) = {n_subsets} exceeds the enumeration limit {limit}"
        )

    best_set: tuple[int, ...] = ()
    best_error = math.inf
    for subset in combinations(range(m), k):
        result = row_least_squares(w_row, subset, G)
        if result.error < best_error:
            best_error = result.error
            best_set = subset
    return best_set, best_error
