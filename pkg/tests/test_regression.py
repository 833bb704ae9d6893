import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakfp.errors import NumericalError, ValidationError
from weakfp.regression import (ReducedSystem, aic, default_lambdas, delta_aic, fit_ols,
                               log_likelihood, mstls, mstls_sweep, ols, r_squared,
                               robust_standard_errors)


def planted(seed, kappa=200, J=10, noise=1e-6):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((kappa, J))
    b = G[:, [2, 5]] @ np.array([3.0, -1.0])
    return G + noise * rng.standard_normal(G.shape), b


def test_lambda_grid():
    lam = default_lambdas()
    assert lam.size == 50
    assert lam[0] == pytest.approx(1e-4) and lam[-1] == pytest.approx(10 ** -0.08)
    assert np.allclose(np.diff(np.log10(lam)), np.diff(np.log10(lam))[0])


def test_ols_identity_and_hand_solution():
    assert np.allclose(ols(np.eye(3), [1.0, 0, 0]), [1, 0, 0])
    G = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0, 2.0])
    # normal equations [[2,1],[1,2]] w = [3,4] -> w = (2/3, 5/3)
    assert np.allclose(ols(G, b), [2 / 3, 5 / 3], atol=1e-12)


def test_ols_rank_deficiency_lists_columns():
    G = np.random.default_rng(0).standard_normal((20, 3))
    G = np.column_stack([G, G[:, 0] + G[:, 1]])
    with pytest.raises(NumericalError, match="dependent columns"):
        ols(G, np.ones(20), labels=["a", "b", "c", "d"])


def test_ols_ill_conditioned_uses_svd_path():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((50, 3)) * np.array([1.0, 1e-4, 1e4])
    w = np.array([1.0, 2.0, 3.0])
    err = np.max(np.abs(ols(G, G @ w) - w))
    assert np.linalg.cond(G) > 1e6
    assert err < 1e-6


def test_ols_residual_orthogonal():
    rng = np.random.default_rng(2)
    G, b = rng.standard_normal((100, 6)), rng.standard_normal(100)
    r = b - G @ ols(G, b)
    assert np.max(np.abs(G.T @ r)) < 1e-8 * np.linalg.norm(G) * np.linalg.norm(b)


def test_mstls_planted_support():
    G, b = planted(0)
    res = mstls(G, b, lam=1e-2)
    assert res.support.tolist() == [2, 5]
    assert res.weights[[2, 5]] == pytest.approx([3, -1], abs=1e-4)


def test_mstls_small_lambda_is_ols_and_large_is_zero():
    rng = np.random.default_rng(3)
    G, b = rng.standard_normal((60, 4)), rng.standard_normal(60)
    w_ls = ols(G, b)
    res = mstls(G, b, lam=1e-12)
    assert np.allclose(res.weights, w_ls, atol=1e-12)
    big = mstls(G, b, lam=0.999)
    assert big.zero_model and not big.weights.any()


def test_mstls_bracket_and_fixed_point():
    G, b = planted(4)
    G = G + 0.05 * np.random.default_rng(9).standard_normal(G.shape)
    red = ReducedSystem(G, b)
    for lam in default_lambdas(20):
        res = mstls(red, lam=lam)
        ratio = math.sqrt(red.b_norm2) / red.col_norms
        for j in res.support:
            assert lam * max(1, ratio[j]) <= abs(res.weights[j]) <= min(1, ratio[j]) / lam
        again = mstls(red, lam=lam, w_init=res.weights)
        assert np.array_equal(again.support, res.support)
        assert np.allclose(again.weights, res.weights, atol=1e-14)
        assert not np.any(res.weights[np.setdiff1d(np.arange(10), res.support)])


def test_mstls_rejects_bad_lambda():
    with pytest.raises(ValidationError):
        mstls(np.eye(3), np.ones(3), lam=1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_sweep_sparsity_monotone(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((80, 8)) * rng.uniform(0.1, 10, 8)
    b = G[:, :3] @ rng.uniform(-2, 2, 3) + 0.3 * rng.standard_normal(80)
    red = ReducedSystem(G, b)
    w_ls = red.solve(np.arange(8))
    counts = [np.count_nonzero(mstls(red, lam=lam, w_init=w_ls).weights) for lam in default_lambdas()]
    assert all(a >= b_ for a, b_ in zip(counts, counts[1:]))


def test_sweep_recovers_planted_and_metrics():
    G, b = planted(5, noise=1e-3)
    m = mstls_sweep(G, b, labels=[f"c{j}" for j in range(10)], n_particles=1000)
    assert m.selected() == ["c2", "c5"]
    assert 0.999 < m.r2 <= 1
    assert m.losses.shape == (50,)
    assert m.loss == pytest.approx(m.losses.min())
    assert math.isfinite(m.aic)


def test_sweep_single_term_returns_ols_scalar():
    rng = np.random.default_rng(6)
    G = rng.standard_normal((40, 1))
    b = 8.0 * G[:, 0] + 0.2 * rng.standard_normal(40)
    m = mstls_sweep(G, b)
    assert not m.zero_model
    assert m.weights[0] == pytest.approx(ols(G, b)[0], rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.1, 10.0))
def test_sweep_scale_equivariance(seed, c):
    # clean planted systems keep weights well inside the balance bracket,
    # where rescaling b cannot move any term across a threshold
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((100, 6))
    b = G[:, [1, 4]] @ np.array([0.8, -0.5]) + 1e-3 * rng.standard_normal(100)
    a, s = mstls_sweep(G, b), mstls_sweep(G, c * b)
    assert np.array_equal(a.support, s.support)
    assert np.allclose(s.weights, c * a.weights, rtol=1e-9, atol=1e-12)


def test_r_squared():
    rng = np.random.default_rng(7)
    G = rng.standard_normal((30, 2))
    b = G @ np.array([1.0, 2.0])
    assert r_squared(G, b, ols(G, b)) == pytest.approx(1.0)
    b0 = rng.standard_normal(30)
    b0 -= b0.mean()
    assert r_squared(G, b0, np.zeros(2)) == pytest.approx(0.0, abs=1e-15)
    assert math.isnan(r_squared(G, np.full(30, 2.0), np.zeros(2)))


def test_aic_conventions():
    r = np.array([0.1, -0.2, 0.3])
    w = np.array([1.0, 0.0, 2.0])
    assert aic(w, r, 50) == pytest.approx(4 + 50 * math.log(0.14))
    assert aic(np.append(w, 0.0), r, 50) == aic(w, r, 50)
    with pytest.warns(UserWarning, match="infinite"):
        assert log_likelihood(np.zeros(3), 10) == math.inf


def test_delta_aic_nested_ols():
    rng = np.random.default_rng(8)
    G = rng.standard_normal((200, 3))
    b = G @ np.array([1.0, -1.0, 0.5]) + 0.5 * rng.standard_normal(200)
    full = fit_ols(G, b, n_particles=200)
    small = fit_ols(G[:, :2], b, n_particles=200)
    assert delta_aic(full, full) == 0
    rss_f = np.sum((b - G @ full.weights) ** 2)
    rss_s = np.sum((b - G[:, :2] @ small.weights) ** 2)
    brute = (2 * 3 + 200 * math.log(rss_f)) - (2 * 2 + 200 * math.log(rss_s))
    assert delta_aic(full, small) == pytest.approx(brute, rel=1e-12)
    assert delta_aic(full, small) < 0  # the third column is real


def test_robust_se_homoskedastic_matches_classical():
    rng = np.random.default_rng(10)
    G = rng.standard_normal((20_000, 3))
    r = 0.7 * rng.standard_normal(20_000)
    se = robust_standard_errors(G, r)
    classical = np.sqrt(np.diag(0.49 * np.linalg.inv(G.T @ G)))
    assert np.allclose(se, classical, rtol=0.05)


def test_robust_se_zero_residual_and_support():
    G = np.random.default_rng(11).standard_normal((30, 4))
    assert not robust_standard_errors(G, np.zeros(30)).any()
    se = robust_standard_errors(G, np.ones(30), support=[1, 3])
    assert se[0] == 0 and se[2] == 0 and se[1] > 0
