"""Choosing which weights to prune.

Two selection rules are provided. The per-weight rule scores every weight in
isolation with ``w^2 / (2 * Ginv[j, j])`` (cross terms between candidate
removals ignored) and keeps the K smallest. The per-group rule, for N:M
patterns, enumerates every size-N subset of each M-wide group and scores the
subset with its exact closed-form loss including interactions.

All tie-breaks are (row, col) ascending / lexicographic so masks are
reproducible byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import compensator
from .errors import ColsNotDivisible, DimMismatch, TooManyCombinations
from .hessian import HessianState
from .tensor_store import DenseMatrix

GROUP_SUBSET_LIMIT = 10_000


@dataclass(frozen=True)
class PruneMask:
    """Per-row strictly increasing pruned column indices."""

    rows: int
    cols: int
    pruned: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.pruned) != self.rows:
            raise ValueError(f"mask has {len(self.pruned)} rows, expected {self.rows}")
        normalized = []
        for i, cols in enumerate(self.pruned):
            cols = tuple(int(c) for c in cols)
            if any(c < 0 or c >= self.cols for c in cols):
                raise ValueError(f"row {i}: column index out of range: {cols}")
            if any(b <= a for a, b in zip(cols, cols[1:])):
                raise ValueError(f"row {i}: indices must be strictly increasing: {cols}")
            normalized.append(cols)
        object.__setattr__(self, "pruned", tuple(normalized))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "PruneMask":
        return cls(rows=rows, cols=cols, pruned=tuple(() for _ in range(rows)))

    @classmethod
    def from_lists(cls, rows: int, cols: int, pruned) -> "PruneMask":
        return cls(rows=rows, cols=cols, pruned=tuple(tuple(sorted(p)) for p in pruned))

    def count(self) -> int:
        return sum(len(p) for p in self.pruned)

    def density(self) -> float:
        return self.count() / (self.rows * self.cols) if self.rows * self.cols else 0.0

    def union(self, other: "PruneMask") -> "PruneMask":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimMismatch("cannot merge masks of different shapes")
        merged = [
            tuple(sorted(set(a) | set(b))) for a, b in zip(self.pruned, other.pruned)
        ]
        return PruneMask(rows=self.rows, cols=self.cols, pruned=tuple(merged))

    def to_bool(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=bool)
        for i, cols in enumerate(self.pruned):
            if cols:
                out[i, list(cols)] = True
        return out


def score_solution_s(w: DenseMatrix, h: HessianState) -> np.ndarray:
    """Per-weight saliency ``w[i,j]^2 / (2 * Ginv[j,j])`` (n x m, all >= 0)."""
    if w.cols != h.dim:
        raise DimMismatch(f"weights have {w.cols} columns, statistic dim is {h.dim}")
    diag = np.diag(h.Ginv)
    return (w.data**2) / (2.0 * diag)[None, :]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mask_unstructured(
    scores: np.ndarray, alpha: float, col_range: tuple[int, int]
) -> PruneMask:
    """Keep the K smallest-scored positions inside ``col_range``, jointly
    across rows, with K = round(alpha * n * range_width) (half rounds up).

    Ties are resolved in (row, col) ascending order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n, m = scores.shape
    lo, hi = col_range
    if not (0 <= lo < hi <= m):
        raise ValueError(f"column range [{lo}, {hi}) outside matrix with {m} columns")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"pruning rate must be in [0, 1], got {alpha}")

    width = hi - lo
    k = _round_half_up(alpha * n * width)
    pruned: list[list[int]] = [[] for _ in range(n)]
    if k > 0:
        flat = scores[:, lo:hi].ravel()  # C order == (row, col) ascending
        order = np.argsort(flat, kind="stable")[:k]
        for pos in order:
            pruned[int(pos) // width].append(int(pos) % width + lo)
    return PruneMask.from_lists(n, m, pruned)


def _check_nm(cols: int, n_prune: int, group: int) -> None:
    if not (0 < n_prune < group):
        raise ValueError(f"need 0 < N < M, got {n_prune}:{group}")
    if cols % group != 0:
        raise ColsNotDivisible(f"{cols} columns not divisible by group width {group}")


def mask_nm_solution_s(scores: np.ndarray, n_prune: int, group: int) -> PruneMask:
    """Per-weight N:M selection: in every M-wide group of every row, prune the
    N smallest-scored positions (ties by column ascending)."""
    scores = np.asarray(scores, dtype=np.float64)
    rows, cols = scores.shape
    _check_nm(cols, n_prune, group)

    grouped = scores.reshape(rows, cols // group, group)
    order = np.argsort(grouped, axis=2, kind="stable")[:, :, :n_prune]
    offsets = np.arange(cols // group)[None, :, None] * group
    picked = np.sort(order + offsets, axis=2)
    pruned = picked.reshape(rows, -1)
    pruned.sort(axis=1)
    return PruneMask.from_lists(rows, cols, [row.tolist() for row in pruned])


def group_subsets(n_prune: int, group: int) -> list[tuple[int, ...]]:
    """Candidate pruned subsets of one group, in lexicographic order."""
    count = math.comb(group, n_prune)
    if count > GROUP_SUBSET_LIMIT:
        raise TooManyCombinations(
            f"C({group},{n_prune}) = {count} exceeds the group enumeration "
            f"limit {GROUP_SUBSET_LIMIT}"
        )
    return list(combinations(range(group), n_prune))


def mask_nm_solution_m(
    w: DenseMatrix,
    h: HessianState,
    n_prune: int,
    group: int,
    col_range: tuple[int, int] | None = None,
) -> PruneMask:
    """Interaction-aware N:M selection.

    Every size-N subset of each group is scored with its exact closed-form
    loss (global column indices into ``Ginv``); groups are independent of one
    another. The first minimizer in lexicographic order wins ties. When
    ``col_range`` is given, only groups inside that window are selected.
    """
    if w.cols != h.dim:
        raise DimMismatch(f"weights have {w.cols} columns, statistic dim is {h.dim}")
    rows, cols = w.rows, w.cols
    lo, hi = col_range if col_range is not None else (0, cols)
    if not (0 <= lo < hi <= cols):
        raise ValueError(f"column range [{lo}, {hi}) outside matrix with {cols} columns")
    _check_nm(hi - lo, n_prune, group)
    subsets = group_subsets(n_prune, group)

    pruned: list[list[int]] = []
    for i in range(rows):
        row_cols: list[int] = []
        for base in range(lo, hi, group):
            best_loss = math.inf
            best: tuple[int, ...] = ()
            for subset in subsets:
                candidate = [base + c for c in subset]
                loss = compensator.predicted_loss_row(w.data[i], candidate, h)
                if loss < best_loss:
                    best_loss = loss
                    best = subset
            row_cols.extend(base + c for c in best)
        pruned.append(row_cols)
    return PruneMask.from_lists(rows, cols, pruned)
