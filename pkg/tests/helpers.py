"""Shared simulation fixtures for the tests."""

import math

import numpy as np

from dpknockoffs.debias import DebugData, debias, decompose_exact
from dpknockoffs.knockoff import augment, sample_knockoffs
from dpknockoffs.model import (
    DesignDistribution, ModelSpec, NoiseSpec, analytic_row_bound, generate_design, sample_noise,
)
from dpknockoffs.privacy import PrivacyBudget, jlt_privatize
from dpknockoffs.solver import SolverConfig, default_lambda, lasso_data


def simulate_release(n, p, s0, r, eps, seed, delta=0.01, mu=1.0, normalize=True, lam=None):
    """Simulate one private fit with the full projection retained."""
    dist = DesignDistribution()
    X = generate_design(n, p, dist, seed)
    Xk = sample_knockoffs(n, p, dist, seed)
    noise = NoiseSpec(1.0).for_n(n)
    xi = sample_noise(n, noise, seed)
    theta = ModelSpec.constant_signal(n, p, s0, mu, normalize=normalize).theta0
    y = X @ theta + xi
    l1 = float(np.abs(theta).sum())
    B = analytic_row_bound(1.0, p, s0, noise.b_n, theta_l1=l1)
    priv = jlt_privatize(augment(X, Xk, y), PrivacyBudget(eps, delta), r, seed, B=B, keep="full")
    lam = default_lambda(1.0, n, 2 * p, r) if lam is None else lam
    sol = lasso_data(priv.features, priv.ystar, n, SolverConfig(lam))
    est = debias(sol.theta, priv.features, priv.ystar, priv.w, n)
    theta0 = np.concatenate([theta, np.zeros(p)])
    dbg = DebugData(np.hstack([X, Xk]), priv.R, priv.w, sol.theta, 1.0)
    report = decompose_exact(est.theta_u, theta0, priv.features, priv.R1, xi, n, dbg)
    return dict(priv=priv, sol=sol, est=est, report=report, lam=lam, theta0=theta0)


def example1_eps(n):
    return n**0.75 * math.sqrt(math.log(n))
