"""Debiased private Lasso and its noise/bias decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class DebiasedEstimate:
    theta_u: np.ndarray
    rho_n: float
    sigma_hat: float
    w: float
    n: int
    r: int

    @property
    def z_scale(self) -> float:
        return self.sigma_hat * self.rho_n


def rho_n(n, r, w) -> float:
    """Noise scale: rho_n^2 = (n + r + 1)/(n r) + w^2/(n r)."""
    if n < 1 or r < 1:
        raise ValueError("n and r must be >= 1")
    return math.sqrt((n + r + 1) / (n * r) + w * w / (n * r))


def noise_covariance(Xstar, R1, n):
    """Conditional covariance factor of the noise term, (1/n^2) X*^T R1 R1^T X*."""
    V = np.asarray(R1).T @ np.asarray(Xstar)
    return V.T @ V / (n * n)


def eta(x, lam, w, n):
    """Map the debiased coordinate back to the Lasso coordinate.

    ``sign(x) (|x| - lam)_+ / (1 + w^2/n)``; vectorized over ``x``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0) / (1.0 + w * w / n)
    return out if out.ndim else float(out)


def debias(theta_star, Xstar_full, ystar, w, n, sigma_hat=1.0) -> DebiasedEstimate:
    """theta_u = theta* + (1/n) X*^T (y* - X* theta*) + (w^2/n) theta*."""
    theta_star = np.asarray(theta_star, dtype=float)
    Xs = np.asarray(Xstar_full, dtype=float)
    ys = np.asarray(ystar, dtype=float)
    if Xs.ndim != 2 or Xs.shape[1] != theta_star.shape[0] or ys.shape != (Xs.shape[0],):
        raise ValueError(
            f"dimension mismatch: X* {Xs.shape}, y* {ys.shape}, theta {theta_star.shape}"
        )
    resid = ys - Xs @ theta_star
    theta_u = theta_star + Xs.T @ resid / n + (w * w / n) * theta_star
    r = Xs.shape[0]
    return DebiasedEstimate(theta_u, rho_n(n, r, w), float(sigma_hat), float(w), int(n), r)


def debias_gram(theta_star, G, c, n, ridge=0.0):
    """Gram-form analogue ``theta + (c - G theta)/n + ridge * theta``.

    ``ridge`` defaults to 0: the JLT augmentation scale has no counterpart
    under the Gaussian mechanism.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    return theta_star + (np.asarray(c) - np.asarray(G) @ theta_star) / n + ridge * theta_star


def estimate_sigma(mode, *, sigma=None, theta_star=None, Xstar=None, ystar=None, w=0.0, n=None):
    """Noise-level estimate used to standardize debiased coordinates.

    ``mode="oracle"`` returns the configured ``sigma``. ``mode="naive-residual"``
    returns ``sqrt(||y* - X* theta*||^2 / (n (1 + w^2/n)))``.
    """
    if mode == "oracle":
        if sigma is None:
            raise ValueError("oracle mode needs sigma")
        return float(sigma)
    if mode == "naive-residual":
        resid = np.asarray(ystar) - np.asarray(Xstar) @ np.asarray(theta_star)
        val = math.sqrt(float(resid @ resid) / (n * (1.0 + w * w / n)))
        return max(val, np.finfo(float).eps)
    raise ValueError(f"unknown sigma mode {mode!r}")


@dataclass(frozen=True)
class DebugData:
    """Simulation-only quantities needed for the exact decomposition."""

    X: np.ndarray          # n x d non-private features
    R: np.ndarray          # r x (n + d + 1) full projection
    w: float
    theta_star: np.ndarray
    sigma: float = 1.0


@dataclass(frozen=True)
class DecompositionReport:
    Z: np.ndarray
    Delta: np.ndarray
    Delta_explicit: np.ndarray
    max_identity_residual: float
    route_residual: float
    delta_to_noise_ratio: float


def bias_term(X, R, w, theta0, theta_star, n):
    """Evaluate the bias closed form directly from ``X`` and the projection ``R``.

    ((1/n) X^T X - I)(theta0 - theta*) + (1/n) M^T (R^T R - I) u with
    ``M = [X; w I; 0]`` and ``u = [X (theta0 - theta*); -w theta*; w]``.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    diff = theta0 - theta_star
    M = np.vstack([X, w * np.eye(d), np.zeros((1, d))])
    u = np.concatenate([X @ diff, -w * theta_star, [w]])
    if R.shape[1] != M.shape[0]:
        raise ValueError(f"R has {R.shape[1]} columns, expected {M.shape[0]}")
    first = (X.T @ (X @ diff)) / n - diff
    RM = R @ M
    Ru = R @ u
    second = (RM.T @ Ru - M.T @ u) / n
    return first + second


def decompose_exact(theta_u, theta0, Xstar, R1, xi, n, debug_data: Optional[DebugData]) -> DecompositionReport:
    """Split theta_u - theta0 into the noise term Z and the bias Delta.

    ``Z = (1/n) X*^T R1 xi``. ``Delta`` is obtained twice: as the residual
    ``theta_u - theta0 - Z`` and from the closed form in :func:`bias_term`;
    their disagreement is reported as ``route_residual``.
    """
    if debug_data is None or R1 is None or xi is None:
        raise ValueError("exact decomposition needs simulation debug data (R, xi, theta0)")
    theta_u = np.asarray(theta_u, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    Xstar = np.asarray(Xstar, dtype=float)
    if theta0.shape != theta_u.shape:
        raise ValueError("theta0 and theta_u lengths differ")
    Z = Xstar.T @ (np.asarray(R1) @ np.asarray(xi)) / n
    Delta = theta_u - theta0 - Z
    Delta_exp = bias_term(debug_data.X, debug_data.R, debug_data.w, theta0, debug_data.theta_star, n)
    resid = float(np.max(np.abs(theta_u - theta0 - Z - Delta_exp)))
    r = Xstar.shape[0]
    noise = debug_data.sigma * rho_n(n, r, debug_data.w)
    return DecompositionReport(
        Z,
        Delta,
        Delta_exp,
        resid,
        float(np.max(np.abs(Delta - Delta_exp))),
        float(np.max(np.abs(Delta_exp)) / noise),
    )
