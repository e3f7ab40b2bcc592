"""Closed-form weight compensation for a fixed pruning mask.

For a row with pruned column set P, the optimal update against the damped
statistic G (with full inverse ``Ginv``) is

    delta = -w[P] @ inv(Ginv[P, P]) @ Ginv[P, :]

with predicted (minimal) damped error

    loss = 0.5 * w[P] @ inv(Ginv[P, P]) @ w[P]

Rows are mutually independent, so the matrix-level routine is just the row
routine applied per row, optionally across threads. A sequential baseline is
provided that zeroes one column at a time and only touches columns to the
right (columns already processed stay frozen); it is never better than the
simultaneous solve for the same mask.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import ConfigError, DimMismatch, SingularSubmatrix
from .hessian import HessianState, _check_index_set
from .tensor_store import DenseMatrix

if TYPE_CHECKING:
    from .mask_select import PruneMask


@dataclass(frozen=True)
class RowCompensation:
    """Update for one row: full-length delta plus its predicted damped error."""

    row: int
    delta: np.ndarray
    predicted_loss: float


@dataclass(frozen=True)
class StrategyCombo:
    """Mask-selection strategy paired with a compensation strategy.

    "s" uses the diagonal approximation (cross terms between pruned weights
    ignored); "m" keeps the full interaction. Written as two letters, mask
    first: ss, sm, ms, mm. Mask strategy "m" is only valid for N:M configs.
    """

    mask_strategy: Literal["s", "m"]
    comp_strategy: Literal["s", "m"]

    def __post_init__(self):
        for name in ("mask_strategy", "comp_strategy"):
            if getattr(self, name) not in ("s", "m"):
                raise ConfigError(f"{name} must be 's' or 'm', got {getattr(self, name)!r}")

    @classmethod
    def parse(cls, text: str) -> "StrategyCombo":
        text = text.strip().lower()
        if len(text) != 2:
            raise ConfigError(f"combo must be two letters from {{s,m}}, got {text!r}")
        return cls(mask_strategy=text[0], comp_strategy=text[1])

    def __str__(self) -> str:
        return self.mask_strategy + self.comp_strategy


def _solve_sub(h: HessianState, idx: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``Ginv[P,P] y = rhs`` symmetrically; 1x1 systems short-circuit."""
    if idx.size == 1:
        return rhs / h.Ginv[idx[0], idx[0]]
    sub = h.Ginv[np.ix_(idx, idx)]
    try:
        factor = cho_factor(sub, lower=True)
    except LinAlgError as exc:
        cond = float(np.linalg.cond(sub))
        raise SingularSubmatrix(
            f"submatrix for pruned set {list(map(int, idx))} is numerically singular", cond
        ) from exc
    return cho_solve(factor, rhs)


def compensate_mrp_row(
    w_row, pruned: Sequence[int], h: HessianState, row: int = 0
) -> RowCompensation:
    """Simultaneous closed-form compensation of one row for pruned set P.

    The returned delta satisfies ``delta[p] == -w_row[p]`` exactly for every
    p in P (the analytic value is pinned rather than left to rounding).
    """
    w_row = np.asarray(w_row, dtype=np.float64)
    if w_row.ndim != 1 or w_row.size != h.dim:
        raise DimMismatch(f"row has size {w_row.shape}, statistic dim is {h.dim}")
    idx = _check_index_set(pruned, h.dim)

    w_sel = w_row[idx]
    y = _solve_sub(h, idx, w_sel)
    delta = -(y @ h.Ginv[idx, :])
    delta[idx] = -w_sel
    loss = 0.5 * float(w_sel @ y)
    return RowCompensation(row=row, delta=delta, predicted_loss=max(loss, 0.0))


def predicted_loss_row(w_row, pruned: Sequence[int], h: HessianState) -> float:
    """Minimal damped error for zeroing ``pruned`` in one row (no delta built)."""
    w_row = np.asarray(w_row, dtype=np.float64)
    idx = _check_index_set(pruned, h.dim)
    w_sel = w_row[idx]
    loss = 0.5 * float(w_sel @ _solve_sub(h, idx, w_sel))
    return max(loss, 0.0)


def compensate_mrp(
    w: DenseMatrix, mask: "PruneMask", h: HessianState, workers: int = 1
) -> DenseMatrix:
    """Full-matrix simultaneous compensation; rows with empty mask get zero delta.

    Row results land in disjoint slices of a preallocated buffer, so the
    output is bitwise independent of the worker count.
    """
    if w.cols != h.dim or mask.cols != w.cols or mask.rows != w.rows:
        raise DimMismatch(
            f"weights {w.rows}x{w.cols}, mask {mask.rows}x{mask.cols}, statistic dim {h.dim}"
        )
    delta = np.zeros((w.rows, w.cols), dtype=np.float64)
    active = [i for i in range(w.rows) if mask.pruned[i]]

    def run(i: int) -> None:
        delta[i, :] = compensate_mrp_row(w.data[i], mask.pruned[i], h, row=i).delta

    if workers > 1 and len(active) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, active))
    else:
        for i in active:
            run(i)
    return DenseMatrix(delta)


def predicted_loss_total(w: DenseMatrix, mask: "PruneMask", h: HessianState) -> float:
    """Sum of per-row predicted losses; equals ``0.5 * tr(delta G delta^T)``."""
    if w.cols != h.dim or mask.cols != w.cols or mask.rows != w.rows:
        raise DimMismatch(
            f"weights {w.rows}x{w.cols}, mask {mask.rows}x{mask.cols}, statistic dim {h.dim}"
        )
    return sum(
        predicted_loss_row(w.data[i], cols, h) for i, cols in enumerate(mask.pruned) if cols
    )


def compensate_sequential_s(
    w: np.ndarray, mask: "PruneMask", h: HessianState, block: tuple[int, int] | None = None
) -> None:
    """In-place one-column-at-a-time baseline over ``block = [lo, hi)``.

    Columns are processed strictly left to right. Zeroing column j of row q
    updates only columns j' >= j (everything to the left stays frozen):

        w[q, j:] -= (w[q, j] / Ginv[j, j]) * Ginv[j, j:]

    and w[q, j] is then set to exactly zero.
    """
    if w.ndim != 2 or w.shape[1] != h.dim:
        raise DimMismatch(f"weights shape {w.shape} vs statistic dim {h.dim}")
    lo, hi = block if block is not None else (0, h.dim)
    if not (0 <= lo < hi <= h.dim):
        raise ValueError(f"invalid block range [{lo}, {hi})")

    rows_at: dict[int, list[int]] = {}
    for q, cols in enumerate(mask.pruned):
        for j in cols:
            if lo <= j < hi:
                rows_at.setdefault(j, []).append(q)

    for j in range(lo, hi):
        rows = rows_at.get(j)
        if not rows:
            continue
        coeff = w[rows, j] / h.Ginv[j, j]
        w[rows, j:] -= np.outer(coeff, h.Ginv[j, j:])
        w[rows, j] = 0.0
