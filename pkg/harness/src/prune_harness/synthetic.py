"""Correlated Gaussian layer generator.

Activations follow an AR(1) row covariance (corr(i, j) = rho^|i-j|), which
gives the pruning statistic the off-diagonal structure that makes
simultaneous compensation matter. Calibration and held-out draws come from
disjoint seed substreams of the same generator.
"""

from __future__ import annotations

import numpy as np


def ar1_covariance(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def correlated_activations(rng: np.random.Generator, dim: int, columns: int, rho: float) -> np.ndarray:
    chol = np.linalg.cholesky(ar1_covariance(dim, rho))
    return chol @ rng.normal(size=(dim, columns))


def synthetic_layer(
    seed: int, index: int, rows: int, cols: int, calib_columns: int, heldout_columns: int, rho: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One layer: weights (rows x cols), calibration and held-out activations."""
    w_rng = np.random.default_rng([seed, index, 0])
    weights = w_rng.normal(size=(rows, cols)) / np.sqrt(cols)
    calib = correlated_activations(np.random.default_rng([seed, index, 1]), cols, calib_columns, rho)
    heldout = correlated_activations(np.random.default_rng([seed, index, 2]), cols, heldout_columns, rho)
    return weights, calib, heldout
