"""l1-penalized least squares by cyclic coordinate descent.

Both entry points minimise ``(1/2n)(theta^T G theta - 2 theta^T c) + lam ||theta||_1``.
``lasso_data`` forms ``G = Xd^T Xd`` and ``c = Xd^T yd`` from (possibly
sketched) data; ``lasso_gram`` takes released moments directly, which may be
indefinite, and reports rather than hides a diverging run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    max_iters: int = 10_000
    tol: float = 1e-10
    C_lambda: float = 1.0
    record_objective: bool = True

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class LassoProblem:
    """Quadratic data of the objective; ``n`` is the original sample size."""

    G: np.ndarray
    c: np.ndarray
    n: float
    yy: Optional[float] = None

    @classmethod
    def from_data(cls, Xd, yd, n_scale):
        Xd = np.asarray(Xd, dtype=float)
        yd = np.asarray(yd, dtype=float)
        if Xd.ndim != 2 or yd.shape != (Xd.shape[0],):
            raise ValueError(f"shape mismatch: Xd {Xd.shape}, yd {yd.shape}")
        if not (np.all(np.isfinite(Xd)) and np.all(np.isfinite(yd))):
            raise ValueError("non-finite inputs")
        G = Xd.T @ Xd
        G = np.triu(G) + np.triu(G, 1).T
        return cls(G, Xd.T @ yd, float(n_scale), float(yd @ yd))

    def objective(self, theta, lam) -> float:
        quad = theta @ (self.G @ theta) - 2.0 * theta @ self.c
        if self.yy is not None:
            quad += self.yy
        return quad / (2.0 * self.n) + lam * np.abs(theta).sum()

    def gradient(self, theta) -> np.ndarray:
        return (self.G @ theta - self.c) / self.n


@dataclass
class LassoSolution:
    theta: np.ndarray
    lam: float
    iterations: int
    converged: bool
    form: str
    objective: list = field(default_factory=list)
    nonconvex_detected: bool = False
    kkt_violation: float = float("nan")


@dataclass(frozen=True)
class KKTReport:
    max_violation: float
    passed: bool
    violations: np.ndarray


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def kkt_check(solution, problem: LassoProblem, tol, lam=None) -> KKTReport:
    """Subgradient optimality of ``theta`` for ``problem``.

    Active coordinates need ``|grad_j + lam sign(theta_j)| <= tol``; inactive
    ones need ``|grad_j| <= lam + tol``.
    """
    theta = solution.theta if isinstance(solution, LassoSolution) else np.asarray(solution, float)
    if lam is None:
        lam = solution.lam
    g = problem.gradient(theta)
    active = theta != 0
    viol = np.where(active, np.abs(g + lam * np.sign(theta)), np.maximum(np.abs(g) - lam, 0.0))
    worst = float(viol.max(initial=0.0))
    return KKTReport(worst, worst <= tol, viol)


def _coordinate_descent(problem: LassoProblem, cfg: SolverConfig, form, theta_init=None,
                        detect_nonconvex=False) -> LassoSolution:
    G, c, n, lam = problem.G, problem.c, problem.n, cfg.lam
    d = c.shape[0]
    theta = np.zeros(d) if theta_init is None else np.array(theta_init, dtype=float)
    diag = np.diag(G).copy()
    objective = []

    if detect_nonconvex and np.any(diag <= 0):
        return LassoSolution(theta, lam, 0, False, form, objective, nonconvex_detected=True)

    Gt = G @ theta
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)) / max(float(diag[diag > 0].min(initial=1.0)), 1e-300))
    blowup = 1e6 * scale
    thr = lam * n
    prev = problem.objective(theta, lam)
    if cfg.record_objective:
        objective.append(prev)
    Grows = [G[j] for j in range(d)]

    converged = False
    it = 0
    kkt = float("nan")
    for it in range(1, cfg.max_iters + 1):
        max_step = 0.0
        for j in range(d):
            gjj = diag[j]
            if gjj <= 0.0:
                continue
            old = theta[j]
            z = c[j] - Gt[j] + gjj * old
            if z > thr:
                new = (z - thr) / gjj
            elif z < -thr:
                new = (z + thr) / gjj
            else:
                new = 0.0
            step = new - old
            if step != 0.0:
                theta[j] = new
                Gt += step * Grows[j]
                if abs(step) > max_step:
                    max_step = abs(step)
        cur = problem.objective(theta, lam)
        if cfg.record_objective:
            objective.append(cur)
        if detect_nonconvex:
            rising = cur > prev + 1e-12 * (abs(prev) + 1.0)
            if rising or not np.isfinite(cur) or np.max(np.abs(theta)) > blowup:
                return LassoSolution(theta, lam, it, False, form, objective, nonconvex_detected=True)
        prev = cur
        if max_step <= cfg.tol:
            # A sweep of tiny steps can still leave earlier coordinates stale;
            # only stop once the optimality conditions hold as well.
            Gt = G @ theta
            kkt = kkt_check(theta, problem, 10 * cfg.tol, lam).max_violation
            if kkt <= 10 * cfg.tol or max_step == 0.0:
                converged = kkt <= 10 * cfg.tol
                break
    if math.isnan(kkt):
        kkt = kkt_check(theta, problem, 10 * cfg.tol, lam).max_violation
    return LassoSolution(theta, lam, it, converged, form, objective, kkt_violation=kkt)


def lasso_data(Xd, yd, n_scale, cfg: SolverConfig, theta_init=None) -> LassoSolution:
    """Minimise ``(1/2n)||Xd theta - yd||^2 + lam ||theta||_1``.

    ``n_scale`` is the original sample size even when ``Xd`` is a sketch with
    ``r`` rows.
    """
    problem = LassoProblem.from_data(Xd, yd, n_scale)
    return _coordinate_descent(problem, cfg, "data", theta_init)


def lasso_gram(G, c, n_scale, cfg: SolverConfig, theta_init=None) -> LassoSolution:
    """Coordinate descent on released moments ``(G, c)``.

    ``G`` may be indefinite. A non-positive diagonal entry, an objective
    increase across a sweep, or runaway iterates set ``nonconvex_detected``
    and stop with ``converged=False``.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or c.shape != (G.shape[0],):
        raise ValueError(f"shape mismatch: G {G.shape}, c {c.shape}")
    if not np.array_equal(G, G.T):
        if not np.allclose(G, G.T, rtol=1e-12, atol=0):
            raise ValueError("G must be symmetric")
        G = 0.5 * (G + G.T)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite inputs")
    return _coordinate_descent(LassoProblem(G, c, float(n_scale)), cfg, "gram", theta_init,
                               detect_nonconvex=True)


def default_lambda(sigma, n, p, r, C_lambda=1.0) -> float:
    """C_lambda * sigma * max(sqrt(log p / n), sqrt((log p)^3 / r))."""
    if min(sigma, n, p, r, C_lambda) <= 0:
        raise ValueError("all arguments must be positive")
    lp = math.log(p)
    return C_lambda * sigma * max(math.sqrt(lp / n), math.sqrt(lp**3 / r))
