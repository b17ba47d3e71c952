import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpknockoffs.solver import (
    LassoProblem, SolverConfig, default_lambda, kkt_check, lasso_data, lasso_gram, soft_threshold,
)

from oracles import fista_lasso, lasso_objective

# Independent evaluation of max(sqrt(log 50/1e6), sqrt((log 50)^3/1500)).
LAMBDA_FIG2_SCALE = 0.19978205248346703


def orthogonal_design(n, p, seed=0):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, p)))
    return math.sqrt(n) * Q


def test_orthogonal_closed_form():
    n = 50
    X = orthogonal_design(n, 2)
    y = X @ np.array([0.3, 0.05])  # (1/n) X^T y = (0.3, 0.05)
    sol = lasso_data(X, y, n, SolverConfig(0.1))
    np.testing.assert_allclose(sol.theta, [0.2, 0.0], atol=1e-9)
    assert sol.converged


def test_null_solution_above_lambda_max():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(30, 5)), rng.normal(size=30)
    lam_max = np.max(np.abs(X.T @ y)) / 30
    sol = lasso_data(X, y, 30, SolverConfig(lam_max * 1.0001))
    np.testing.assert_array_equal(sol.theta, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_matches_fista_oracle(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(20, 8)), rng.normal(size=20)
    lam = 0.05
    sol = lasso_data(X, y, 20, SolverConfig(lam))
    ref = fista_lasso(X, y, 20, lam)
    assert abs(lasso_objective(X, y, 20, lam, sol.theta) - lasso_objective(X, y, 20, lam, ref)) <= 1e-8


def test_gram_identity_is_soft_threshold():
    n = 40
    c = np.array([8.0, -2.0, 1.0])
    sol = lasso_gram(n * np.eye(3), c, n, SolverConfig(0.1))
    np.testing.assert_allclose(sol.theta, soft_threshold(c / n, 0.1), atol=1e-12)


def test_gram_matches_data_form():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(60, 6)), rng.normal(size=60)
    cfg = SolverConfig(0.02)
    a = lasso_data(X, y, 60, cfg)
    b = lasso_gram(X.T @ X, X.T @ y, 60, cfg)
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-9)


def test_indefinite_gram_flagged():
    G = np.array([[1.0, 3.0], [3.0, 1.0]])  # eigenvalues 4 and -2
    sol = lasso_gram(G, np.array([1.0, -1.0]), 1.0, SolverConfig(0.01, max_iters=500))
    assert sol.nonconvex_detected and not sol.converged
    # the recorded trajectory runs away: the objective becomes very negative
    assert sol.objective[-1] < sol.objective[0] - 1e3


def test_nonpositive_diagonal_flagged():
    sol = lasso_gram(np.array([[-1.0, 0.0], [0.0, 1.0]]), np.ones(2), 1.0, SolverConfig(0.1))
    assert sol.nonconvex_detected and not sol.converged


def test_gram_requires_symmetry():
    with pytest.raises(ValueError):
        lasso_gram(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2), 1.0, SolverConfig(0.1))


def test_default_lambda():
    lp = math.log(64)
    assert default_lambda(1.0, 500, 64, 500, 2.0) == pytest.approx(2.0 * math.sqrt(lp**3 / 500))
    assert default_lambda(1.0, 1e6, 50, 1500) == pytest.approx(LAMBDA_FIG2_SCALE, rel=1e-12)
    assert default_lambda(2.0, 1e6, 50, 1500) == pytest.approx(2 * LAMBDA_FIG2_SCALE)
    with pytest.raises(ValueError):
        default_lambda(0.0, 10, 5, 5)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(0.0)
    with pytest.raises(ValueError):
        SolverConfig(0.1, tol=0.0)


def test_kkt_report():
    n = 50
    X = orthogonal_design(n, 3, seed=4)
    y = X @ np.array([0.5, -0.4, 0.01])
    cfg = SolverConfig(0.1)
    sol = lasso_data(X, y, n, cfg)
    prob = LassoProblem.from_data(X, y, n)
    assert kkt_check(sol, prob, 10 * cfg.tol).passed
    zero = kkt_check(np.zeros(3), prob, 1e-12, lam=1.0)
    assert zero.passed
    bumped = sol.theta.copy()
    bumped[0] += 10 * cfg.tol
    assert not kkt_check(bumped, prob, cfg.tol, lam=cfg.lam).passed


@given(st.integers(0, 10_000), st.floats(0.005, 0.5))
def test_converged_solutions_satisfy_kkt(seed, lam):
    rng = np.random.default_rng(seed)
    n, p = 40, 7
    X = rng.normal(size=(n, p))
    y = X[:, 0] - 0.5 * X[:, 1] + rng.normal(size=n)
    cfg = SolverConfig(lam)
    sol = lasso_data(X, y, n, cfg)
    assert sol.converged
    rep = kkt_check(sol, LassoProblem.from_data(X, y, n), 10 * cfg.tol)
    assert rep.passed
    grad = X.T @ (X @ sol.theta - y) / n
    slack = lam - np.abs(grad)
    assert np.all(sol.theta[slack > 1e-6] == 0)
    obj = sol.objective
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(obj, obj[1:]))
