from __future__ import annotations

import numpy as np
import pytest

from multiprune import accumulate, dampen, sub_inverse
from multiprune.errors import DimMismatch, NotPositiveDefinite

from conftest import correlated_activations, correlated_state, sorted_subset


def test_accumulate_orthonormal_scaled():
    x = np.eye(2) / np.sqrt(2.0)
    assert np.allclose(accumulate([x]), np.eye(2), atol=1e-15)


def test_accumulate_outer_product():
    x = np.array([[1.0], [1.0]])
    assert np.array_equal(accumulate([x]), np.array([[2.0, 2.0], [2.0, 2.0]]))


def test_accumulate_partition_invariant(rng):
    x = rng.normal(size=(5, 12))
    whole = accumulate([x])
    split = accumulate([x[:, :7], x[:, 7:]])
    assert np.max(np.abs(whole - split)) <= 1e-12 * np.max(np.abs(whole))


def test_accumulate_is_symmetric(rng):
    g = accumulate([rng.normal(size=(9, 40))])
    assert np.array_equal(g, g.T)


def test_accumulate_dim_mismatch(rng):
    with pytest.raises(DimMismatch):
        accumulate([rng.normal(size=(4, 3)), rng.normal(size=(5, 3))])


def test_accumulate_empty_is_error():
    with pytest.raises(ValueError):
        accumulate([])


def test_dampen_diagonal_case():
    h = dampen(np.eye(2), 0.01)
    assert np.allclose(h.G, 1.01 * np.eye(2))
    assert np.allclose(h.Ginv, np.eye(2) / 1.01)
    assert h.gamma_abs == pytest.approx(0.01)


def test_dampen_rank_deficient_without_dampening():
    with pytest.raises(NotPositiveDefinite):
        dampen(np.array([[2.0, 2.0], [2.0, 2.0]]), 0.0)


def test_dampen_rank_deficient_with_dampening():
    g_raw = np.array([[2.0, 2.0], [2.0, 2.0]])
    h = dampen(g_raw, 0.01)
    # independent check through the explicit 2x2 inverse formula
    a, b = 2.0 + 0.02, 2.0
    det = a * a - b * b
    expected = np.array([[a, -b], [-b, a]]) / det
    assert np.allclose(h.Ginv, expected, rtol=1e-12)
    assert np.max(np.abs(h.G @ h.Ginv - np.eye(2))) <= 2e-8


def test_dampen_diag_shift_is_exact(rng):
    g_raw = accumulate([rng.normal(size=(6, 20))])
    h = dampen(g_raw, 0.37)
    assert np.array_equal(np.diag(h.G), np.diag(g_raw) + h.gamma_abs)


def test_dampen_rejects_asymmetric():
    with pytest.raises(ValueError):
        dampen(np.array([[1.0, 0.5], [0.2, 1.0]]), 0.01)


def test_dampen_rejects_negative_gamma():
    with pytest.raises(ValueError):
        dampen(np.eye(3), -0.1)


def test_sub_inverse_identity():
    h = dampen(np.eye(4), 0.0)
    assert np.allclose(sub_inverse(h, [1, 3]), np.eye(2), atol=1e-14)


def test_sub_inverse_full_set_recovers_statistic(rng):
    h = correlated_state(rng, 6)
    inv = sub_inverse(h, list(range(6)))
    assert np.allclose(inv, h.G, rtol=1e-9)


def test_sub_inverse_against_lu_oracle(rng):
    h = correlated_state(rng, 6)
    cols = [0, 2, 5]
    block = h.Ginv[np.ix_(cols, cols)]
    assert np.allclose(sub_inverse(h, cols), np.linalg.inv(block), rtol=1e-10)


@pytest.mark.parametrize("seed", range(100))
def test_sub_inverse_spd_property(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 33))
    h = correlated_state(rng, m)
    k = int(rng.integers(1, m + 1))
    cols = sorted_subset(rng, m, k)
    inv = sub_inverse(h, cols)
    residual = inv @ h.Ginv[np.ix_(cols, cols)] - np.eye(k)
    assert np.max(np.abs(residual)) <= 1e-8 * k


@pytest.mark.parametrize("cols", [[], [2, 1], [0, 0], [0, 99]])
def test_sub_inverse_rejects_bad_index_sets(rng, cols):
    h = correlated_state(rng, 5)
    with pytest.raises(ValueError):
        sub_inverse(h, cols)


def test_states_are_read_only(rng):
    h = correlated_state(rng, 4)
    with pytest.raises(ValueError):
        h.G[0, 0] = 1.0
    with pytest.raises(ValueError):
        h.Ginv[0, 0] = 1.0


def test_correlated_activations_have_target_covariance(rng):
    # sanity for the test generator itself: empirical Gram tracks the target
    from conftest import ar1_covariance

    x = correlated_activations(rng, 16, 20_000, rho=0.9)
    emp = (x @ x.T) / x.shape[1]
    ref = ar1_covariance(16, 0.9)
    assert np.linalg.norm(emp - ref) / np.linalg.norm(ref) < 0.1
