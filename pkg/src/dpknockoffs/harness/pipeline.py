"""One simulated repetition: generate, knockoff, privatize, solve, debias, select."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..debias import debias, estimate_sigma, eta
from ..filter import StatisticFamily, evaluate, feature_statistics, knockoff_threshold, select
from ..knockoff import augment, sample_knockoffs
from ..model import DesignDistribution, ModelSpec, NoiseSpec, analytic_row_bound, generate_design, sample_noise
from ..privacy import PrivacyBudget, compute_w, gaussian_privatize_moments, jlt_privatize
from ..solver import SolverConfig, lasso_data, lasso_gram


@dataclass(frozen=True)
class RunSettings:
    """Parameters shared by every repetition of a simulated experiment."""

    n: int
    p: int
    s0: int
    sigma: float = 1.0
    r: int = 500
    epsilon: float = 1.0
    delta: float = 0.01
    lam: float = 0.03
    q: float = 0.2
    plus: bool = True
    t_fixed: Optional[float] = None
    design: DesignDistribution = field(default_factory=DesignDistribution)
    sigma_mode: str = "oracle"
    solver_tol: float = 1e-10
    max_iters: int = 10_000

    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma).for_n(self.n)

    def row_bound(self, mu_max) -> float:
        """Public bound on the rows of ``[X Xk y]`` for signals up to ``mu_max``."""
        b = self.design.support
        return analytic_row_bound(b, self.p, self.s0, self.noise().b_n, theta_l1=self.s0 * abs(mu_max))


@dataclass
class RepOutcome:
    mu: float
    seed: int
    fdp: float
    power: float
    t_hat: float
    k_selected: int
    W: np.ndarray
    theta_star: np.ndarray
    theta_u: np.ndarray
    z: np.ndarray
    converged: bool
    identity_error: float
    w: float
    rho: float


def score_selection(selected, s0):
    """(FDP, power) against the designated support ``{0, ..., s0-1}``.

    The designated support is used even when ``mu = 0`` so that power stays
    defined (it then counts chance selections of those coordinates).
    """
    if s0 == 0:
        return (1.0 if len(selected) else 0.0), math.nan
    return evaluate(selected, np.arange(s0))


def _simulate_inputs(s: RunSettings, seed):
    X = generate_design(s.n, s.p, s.design, seed)
    Xk = sample_knockoffs(s.n, s.p, s.design, seed)
    xi = sample_noise(s.n, s.noise(), seed)
    return X, Xk, xi


def _select_and_score(s: RunSettings, mu, seed, Fstar, ystar, w, theta0):
    cfg = SolverConfig(s.lam, max_iters=s.max_iters, tol=s.solver_tol)
    sol = lasso_data(Fstar, ystar, s.n, cfg)
    est = debias(sol.theta, Fstar, ystar, w, s.n)
    ident = float(np.max(np.abs(eta(est.theta_u, s.lam, w, s.n) - sol.theta)))
    family = StatisticFamily.lcd(s.lam, w, s.n)
    W = feature_statistics(est.theta_u, family)
    t = s.t_fixed if s.t_fixed is not None else knockoff_threshold(W, s.q, s.plus)
    sel = select(W, t)
    fdp, power = score_selection(sel, s.s0)
    sig = estimate_sigma(s.sigma_mode, sigma=s.sigma, theta_star=sol.theta, Xstar=Fstar,
                         ystar=ystar, w=w, n=s.n)
    full0 = np.concatenate([theta0, np.zeros(s.p)])
    z = (est.theta_u - full0) / (sig * est.rho_n)
    return RepOutcome(mu, seed, fdp, power, t, int(sel.size), W, sol.theta, est.theta_u, z,
                      sol.converged, ident, w, est.rho_n)


def run_repetition(s: RunSettings, mu, seed, B=None) -> RepOutcome:
    """Full JLT pipeline for one signal strength and one seed."""
    X, Xk, xi = _simulate_inputs(s, seed)
    theta0 = ModelSpec.constant_signal(s.n, s.p, s.s0, mu).theta0
    y = X @ theta0 + xi
    B = s.row_bound(mu) if B is None else B
    priv = jlt_privatize(augment(X, Xk, y), s.budget(), s.r, seed, B=B)
    return _select_and_score(s, mu, seed, priv.features, priv.ystar, priv.w, theta0)


def run_mu_grid(s: RunSettings, mu_grid, seed) -> list:
    """All grid signal strengths for one seed, sharing data and projection.

    ``[X Xk xi]`` is privatized once; because the sketch is linear,
    ``y*(mu) = (X* - w R_aug[:, :p]) theta0(mu) + (R1 xi + w R3)`` equals the
    release of ``[X Xk X theta0 + xi]`` under the same projection. The row
    bound (hence ``w``) is fixed at the largest grid value.
    """
    X, Xk, xi = _simulate_inputs(s, seed)
    B = s.row_bound(max(abs(m) for m in mu_grid))
    base = jlt_privatize(augment(X, Xk, xi), s.budget(), s.r, seed, B=B, keep="identity")
    R1X = base.Xstar - base.w * base.R_aug[:, : s.p]
    out = []
    for mu in mu_grid:
        theta0 = ModelSpec.constant_signal(s.n, s.p, s.s0, mu).theta0
        # Row bound of the implied [X Xk y] rows, checked like the direct path would.
        y = X @ theta0 + xi
        row_max = math.sqrt(float(np.max(np.einsum("ij,ij->i", X, X) + np.einsum("ij,ij->i", Xk, Xk) + y * y)))
        if row_max > B * (1 + 1e-12):
            raise ValueError(f"row norm {row_max:.6g} exceeds the public bound {B:.6g}")
        ystar = R1X @ theta0 + base.ystar
        out.append(_select_and_score(s, mu, seed, base.features, ystar, base.w, theta0))
    return out


@dataclass
class GaussianOutcome:
    mu: float
    seed: int
    psd: bool
    converged: bool
    nonconvex: bool
    selected_any: bool
    fdp: float
    power: float
    min_eig: float


def run_gaussian_repetition(s: RunSettings, mu, seed, X=None, B=None) -> GaussianOutcome:
    """Gaussian-mechanism Gram path with the same knockoff filter."""
    if X is None:
        X, Xk, xi = _simulate_inputs(s, seed)
    else:
        n, p = X.shape
        Xk = sample_knockoffs(n, p, s.design, seed)
        xi = sample_noise(n, s.noise(), seed)
    theta0 = ModelSpec.constant_signal(s.n, s.p, s.s0, mu).theta0
    y = X @ theta0 + xi
    B = s.row_bound(mu) if B is None else B
    mom = gaussian_privatize_moments(augment(X, Xk, y), s.budget(), seed, B=B)
    min_eig = mom.min_eigenvalue()
    sol = lasso_gram(mom.G, mom.c, s.n, SolverConfig(s.lam, max_iters=s.max_iters, tol=s.solver_tol))
    W = np.abs(sol.theta[: s.p]) - np.abs(sol.theta[s.p :])
    t = s.t_fixed if s.t_fixed is not None else knockoff_threshold(W, s.q, s.plus)
    sel = select(W, t) if np.all(np.isfinite(W)) else np.array([], dtype=int)
    fdp, power = score_selection(sel, s.s0)
    return GaussianOutcome(mu, seed, min_eig >= 0, sol.converged, sol.nonconvex_detected,
                           bool(sel.size), fdp, power, min_eig)


def memory_estimate(n, p, r, tile_rows=512) -> int:
    """Peak bytes: design, knockoffs, response, one projection tile and the sketch."""
    d = 2 * p + 1
    data = 8 * n * d * 2          # [X Xk y] plus the stacked copy
    tile = 8 * r * tile_rows * 2  # the tile and its product temporaries
    sketch = 8 * r * d * 3
    return data + tile + sketch
