"""Layer statistic ``G = 2 x x^T + gamma*I`` and its inverses.

Every solver path works off the full inverse ``Ginv`` computed once per
layer; principal-submatrix inverses are extracted by index selection and
re-factorized per query. All factorizations are symmetric (Cholesky) so
indefiniteness is detected rather than silently absorbed.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DimMismatch, NotPositiveDefinite, SingularSubmatrix
from .tensor_store import DenseMatrix

_SYM_RTOL = 1e-12


def _as_array(x) -> np.ndarray:
    if isinstance(x, DenseMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class HessianState:
    """Damped layer statistic, frozen per layer.

    ``G = G_raw + gamma_abs*I`` where ``G_raw = sum_b 2 x_b x_b^T`` and
    ``gamma_abs = gamma_rel * mean(diag(G_raw))``. ``Ginv`` is the full
    symmetric inverse of the damped matrix.
    """

    G: np.ndarray
    Ginv: np.ndarray
    gamma_rel: float
    gamma_abs: float

    @property
    def dim(self) -> int:
        return self.G.shape[0]


def accumulate(batches: Iterable) -> np.ndarray:
    """Sum ``2 x_b x_b^T`` over activation batches (each m x B_b).

    The result is independent of how the columns are partitioned into
    batches, and is symmetrized exactly before returning.
    """
    total = None
    dim = None
    for batch in batches:
        x = _as_array(batch)
        if x.ndim != 2:
            raise DimMismatch(f"calibration batch must be 2-D, got ndim={x.ndim}")
        if dim is None:
            dim = x.shape[0]
            total = np.zeros((dim, dim), dtype=np.float64)
        elif x.shape[0] != dim:
            raise DimMismatch(f"batch has {x.shape[0]} rows, expected {dim}")
        total += 2.0 * (x @ x.T)
    if total is None:
        raise ValueError("at least one calibration batch is required")
    return (total + total.T) / 2.0


def dampen(G_raw: np.ndarray, gamma_rel: float) -> HessianState:
    """Add relative dampening and invert via SPD factorization.

    The absolute shift is ``gamma_rel * mean(diag(G_raw))`` so the same ratio
    behaves consistently across layers of very different activation scale.
    """
    G_raw = _as_array(G_raw)
    if G_raw.ndim != 2 or G_raw.shape[0] != G_raw.shape[1]:
        raise DimMismatch(f"statistic must be square, got shape {G_raw.shape}")
    scale = max(1.0, float(np.max(np.abs(G_raw))))
    if float(np.max(np.abs(G_raw - G_raw.T))) > _SYM_RTOL * scale:
        raise ValueError("statistic is not symmetric")
    if gamma_rel < 0:
        raise ValueError(f"dampening ratio must be >= 0, got {gamma_rel}")

    m = G_raw.shape[0]
    gamma_abs = float(gamma_rel) * float(np.mean(np.diag(G_raw)))
    G = G_raw + gamma_abs * np.eye(m)
    not_pd = NotPositiveDefinite(
        f"damped statistic is not positive definite (gamma_rel={gamma_rel}); "
        "calibration data may be rank-deficient"
    )
    try:
        factor = cho_factor(G, lower=True)
    except LinAlgError as exc:
        raise not_pd from exc
    # rounding can squeeze a tiny positive pivot out of an exactly singular
    # matrix, so enforce a floor relative to the diagonal scale
    pivots = np.diag(factor[0]) ** 2
    if float(np.min(pivots)) <= m * np.finfo(np.float64).eps * float(np.max(np.diag(G))):
        raise not_pd
    Ginv = cho_solve(factor, np.eye(m))
    Ginv = (Ginv + Ginv.T) / 2.0
    G.setflags(write=False)
    Ginv.setflags(write=False)
    return HessianState(G=G, Ginv=Ginv, gamma_rel=float(gamma_rel), gamma_abs=gamma_abs)


def _check_index_set(cols: Sequence[int], dim: int) -> np.ndarray:
    idx = np.asarray(cols, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("index set must be a non-empty 1-D sequence")
    if np.any(idx < 0) or np.any(idx >= dim):
        raise ValueError(f"index out of range for dimension {dim}: {cols}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError(f"indices must be strictly increasing: {cols}")
    return idx


def sub_inverse(h: HessianState, cols: Sequence[int]) -> np.ndarray:
    """Inverse of the principal submatrix ``Ginv[P, P]``.

    The submatrix is extracted by row/column selection (never one-hot
    products) and factorized symmetrically.
    """
    idx = _check_index_set(cols, h.dim)
    sub = h.Ginv[np.ix_(idx, idx)]
    try:
        factor = cho_factor(sub, lower=True)
    except LinAlgError as exc:
        cond = float(np.linalg.cond(sub))
        raise SingularSubmatrix(
            f"principal submatrix {list(map(int, idx))} is numerically singular", cond
        ) from exc
    inv = cho_solve(factor, np.eye(idx.size))
    return (inv + inv.T) / 2.0
