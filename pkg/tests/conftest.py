from __future__ import annotations

import numpy as np
import pytest

from multiprune import accumulate, dampen


def ar1_covariance(m: int, rho: float) -> np.ndarray:
    idx = np.arange(m)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def correlated_activations(rng, m: int, n_cols: int, rho: float = 0.9) -> np.ndarray:
    """Gaussian activations whose rows follow an AR(1) covariance."""
    chol = np.linalg.cholesky(ar1_covariance(m, rho))
    return chol @ rng.normal(size=(m, n_cols))


def correlated_state(rng, m: int, rho: float = 0.9, gamma_rel: float = 0.01, n_cols=None):
    x = correlated_activations(rng, m, n_cols or 2 * m, rho)
    return dampen(accumulate([x]), gamma_rel)


def sorted_subset(rng, m: int, k: int) -> list[int]:
    return sorted(rng.choice(m, size=k, replace=False).tolist())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
