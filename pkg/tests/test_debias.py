import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpknockoffs.debias import (
    DebugData, bias_term, debias, decompose_exact, estimate_sigma, eta, noise_covariance, rho_n,
)
from dpknockoffs.solver import SolverConfig, lasso_data

from helpers import example1_eps, simulate_release


def test_rho_n_values():
    assert rho_n(1000, 500, 0.0) ** 2 == pytest.approx(1501 / 500_000, rel=1e-14)
    assert rho_n(1e12, 300, 0.0) ** 2 == pytest.approx(1 / 300, rel=1e-6)
    assert rho_n(100, 50, 3.0) > rho_n(100, 50, 2.0)
    with pytest.raises(ValueError):
        rho_n(0, 5, 0.0)


def test_eta_values():
    assert eta(0.0, 0.1, 0.0, 10) == 0.0
    assert eta(0.3, 0.1, 0.0, 10) == pytest.approx(0.2)
    assert eta(-0.3, 0.1, math.sqrt(10), 10) == pytest.approx(-0.1)
    np.testing.assert_allclose(eta(np.array([0.05, -0.5]), 0.1, 0.0, 1), [0.0, -0.4])


def test_debias_exact_ols_is_fixed_point():
    rng = np.random.default_rng(0)
    n = 6
    X = rng.normal(size=(n, n))
    y = rng.normal(size=n)
    theta = np.linalg.solve(X, y)
    est = debias(theta, X, y, 0.0, n)
    np.testing.assert_allclose(est.theta_u, theta, atol=1e-12)


def test_debias_matches_loop_implementation():
    rng = np.random.default_rng(1)
    r, d, n, w = 9, 4, 30, 2.5
    Xs, ys, th = rng.normal(size=(r, d)), rng.normal(size=r), rng.normal(size=d)
    est = debias(th, Xs, ys, w, n)
    ref = []
    for j in range(d):
        resid = sum(Xs[k, j] * (ys[k] - sum(Xs[k, l] * th[l] for l in range(d))) for k in range(r))
        ref.append(th[j] + resid / n + w * w / n * th[j])
    np.testing.assert_allclose(est.theta_u, ref, atol=1e-12)
    assert est.rho_n == pytest.approx(rho_n(n, r, w))


@given(st.integers(0, 10_000), st.floats(0.01, 0.3))
def test_eta_inverts_debiasing(seed, lam):
    rng = np.random.default_rng(seed)
    n, r, d, w = 80, 40, 6, 3.0
    Xs = rng.normal(size=(r, d)) * math.sqrt(n / r)
    ys = Xs[:, 0] + rng.normal(size=r)
    sol = lasso_data(Xs, ys, n, SolverConfig(lam))
    est = debias(sol.theta, Xs, ys, w, n)
    np.testing.assert_allclose(eta(est.theta_u, lam, w, n), sol.theta, atol=1e-9)


def test_decomposition_degenerate_case():
    n, d = 5, 2
    rng = np.random.default_rng(2)
    X = rng.normal(size=(n, d))
    theta0 = np.array([0.4, -1.0])
    R = np.eye(n + d + 1)
    Xstar = R @ np.vstack([X, np.zeros((d, d)), np.zeros((1, d))])
    ystar = R @ np.concatenate([X @ theta0, np.zeros(d), [0.0]])
    est = debias(theta0, Xstar, ystar, 0.0, n)
    rep = decompose_exact(est.theta_u, theta0, Xstar, R[:, :n], np.zeros(n), n,
                          DebugData(X, R, 0.0, theta0))
    np.testing.assert_allclose(rep.Z, 0.0, atol=1e-15)
    np.testing.assert_allclose(rep.Delta_explicit, ((X.T @ X) / n - np.eye(d)) @ np.zeros(d), atol=1e-12)


def test_bias_term_requires_matching_projection():
    with pytest.raises(ValueError):
        bias_term(np.zeros((4, 2)), np.zeros((3, 5)), 1.0, np.zeros(2), np.zeros(2), 4)


def test_decomposition_needs_debug_data():
    with pytest.raises(ValueError):
        decompose_exact(np.zeros(2), np.zeros(2), np.zeros((3, 2)), None, None, 3, None)


@pytest.mark.parametrize("seed", range(3))
def test_decomposition_identity_on_simulation(seed):
    out = simulate_release(400, 5, 2, 150, 50.0, seed)
    rep = out["report"]
    scale = max(1.0, np.max(np.abs(out["est"].theta_u)))
    assert rep.max_identity_residual <= 1e-8 * scale
    assert rep.route_residual <= 1e-6


def test_noise_covariance_is_gram_of_projection():
    rng = np.random.default_rng(4)
    Xs, R1 = rng.normal(size=(7, 3)), rng.normal(size=(7, 11))
    Q = noise_covariance(Xs, R1, 11)
    np.testing.assert_allclose(Q, Xs.T @ R1 @ R1.T @ Xs / 121, atol=1e-12)


def test_bias_shrinks_relative_to_noise():
    decreasing = 0
    for seed in range(10):
        ratios = []
        for n in (500, 2000, 8000):
            out = simulate_release(n, 5, 2, n // 2, example1_eps(n), seed)
            ratios.append(out["report"].delta_to_noise_ratio)
        decreasing += ratios[0] > ratios[1] > ratios[2]
    assert decreasing >= 9


def test_sigma_estimates():
    assert estimate_sigma("oracle", sigma=1.0) == 1.0
    rng = np.random.default_rng(5)
    n = 50
    X = rng.normal(size=(n, 3))
    xi = rng.normal(size=n)
    theta = np.array([1.0, 0.0, -1.0])
    got = estimate_sigma("naive-residual", theta_star=theta, Xstar=X, ystar=X @ theta + xi, w=0.0, n=n)
    assert got == pytest.approx(np.linalg.norm(xi) / math.sqrt(n))
    with pytest.raises(ValueError):
        estimate_sigma("bogus")


def test_naive_residual_accuracy():
    out = simulate_release(5000, 5, 2, 2500, 1e4, 0)
    priv, sol = out["priv"], out["sol"]
    got = estimate_sigma("naive-residual", theta_star=sol.theta, Xstar=priv.features,
                         ystar=priv.ystar, w=priv.w, n=5000)
    assert abs(got - 1.0) <= 0.2
