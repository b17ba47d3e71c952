"""Monte-Carlo predictions of knockoff FDP/power and debiasing condition checks.

Probabilities are estimated from standard-normal pairs ``(Z, Z')`` drawn from
a stream keyed on the seed only, so every configuration evaluated with the
same seed sees the same random numbers. Working in units of ``sigma*rho_n``
is exact for scale-covariant families: with ``mu0 = mu/(sigma rho_n)``,
``t0 = t/(sigma rho_n)`` and ``a = lam/(sigma rho_n)``,
``f(mu + sigma rho_n Z; lam) - f(sigma rho_n Z'; lam) >= t`` holds iff
``f(mu0 + Z; a) - f(Z'; a) >= t0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream
from .debias import rho_n
from .filter import StatisticFamily
from .model import analytic_row_bound, default_truncation
from .privacy import compute_w
from .solver import default_lambda

_CHUNK = 1 << 18


@dataclass(frozen=True)
class TheoryInputs:
    mu0: float
    t0: float
    c0: float
    family: StatisticFamily = field(default_factory=StatisticFamily)
    n_mc: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.c0 < 1:
            raise ValueError(f"c0 must lie in (0, 1), got {self.c0}")
        if self.mu0 < 0:
            raise ValueError("mu0 must be non-negative")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.n_mc < 1:
            raise ValueError("n_mc must be positive")


def standard_pairs(n_mc, seed):
    """Shared ``(Z, Z')`` draws, generated in fixed chunks with per-chunk seeds."""
    zs, zps = [], []
    for k, lo in enumerate(range(0, n_mc, _CHUNK)):
        m = min(_CHUNK, n_mc - lo)
        rng = stream(seed, "theory", k)
        zs.append(rng.standard_normal(m))
        zps.append(rng.standard_normal(m))
    return np.concatenate(zs), np.concatenate(zps)


def _ratio_se(num, den):
    """Delta-method standard error of mean(num)/mean(den)."""
    m = num.size
    N, D = num.mean(), den.mean()
    if D == 0:
        return math.nan
    R = N / D
    cov = np.cov(np.vstack([num, den]), ddof=1) if m > 1 else np.zeros((2, 2))
    var = (cov[0, 0] - 2 * R * cov[0, 1] + R * R * cov[1, 1]) / (D * D * m)
    return math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class TheoryEstimate:
    mu0: float
    t0: float
    c0: float
    alpha_hat: float
    alpha: float
    beta: float
    se_alpha_hat: float
    se_alpha: float
    se_beta: float
    p_signal_pos: float
    p_signal_neg: float
    p_null_tail: float
    flag: str = ""

    def as_row(self):
        return {
            "mu0": self.mu0, "t0": self.t0, "c0": self.c0,
            "alpha_hat": self.alpha_hat, "alpha": self.alpha, "beta": self.beta,
            "se_alpha_hat": self.se_alpha_hat, "se_alpha": self.se_alpha, "se_beta": self.se_beta,
            "flag": self.flag,
        }


def _estimate(mu0, t0, c0, family, Z, Zp) -> TheoryEstimate:
    f_sig = family.value(mu0 + Z) - family.value(Zp)
    f_null = family.value(Z) - family.value(Zp)
    sig_pos = (f_sig >= t0).astype(float)
    sig_neg = (f_sig <= -t0).astype(float)
    # The null difference is symmetric, so both of its tails share one
    # symmetrized estimator; this keeps alpha_hat >= alpha exactly.
    null_tail = 0.5 * ((f_null >= t0).astype(float) + (f_null <= -t0).astype(float))
    den = c0 * sig_pos + (1 - c0) * null_tail
    num_hat = c0 * sig_neg + (1 - c0) * null_tail
    num = (1 - c0) * null_tail
    D = den.mean()
    flag = ""
    if D == 0:
        a_hat = math.inf if num_hat.mean() > 0 else math.nan
        a = math.nan
        flag = "indeterminate" if num_hat.mean() == 0 else "zero-denominator"
        se_ah = se_a = math.nan
    else:
        a_hat, a = num_hat.mean() / D, num.mean() / D
        se_ah, se_a = _ratio_se(num_hat, den), _ratio_se(num, den)
    beta = sig_pos.mean()
    m = Z.size
    return TheoryEstimate(
        mu0, t0, c0, float(a_hat), float(a), float(beta), se_ah, se_a,
        math.sqrt(beta * (1 - beta) / m), float(beta), float(sig_neg.mean()),
        float(null_tail.mean()), flag,
    )


def theory_point(inputs: TheoryInputs) -> TheoryEstimate:
    Z, Zp = standard_pairs(inputs.n_mc, inputs.seed)
    return _estimate(inputs.mu0, inputs.t0, inputs.c0, inputs.family, Z, Zp)


def mc_alpha_hat(inputs: TheoryInputs, return_se=False):
    """Limit of the estimated FDP at threshold ``t0`` (in sigma*rho_n units)."""
    est = theory_point(inputs)
    return (est.alpha_hat, est.se_alpha_hat) if return_se else est.alpha_hat


def mc_alpha(inputs: TheoryInputs, return_se=False):
    """Limit of the realized FDP at threshold ``t0``; NaN when 0/0."""
    est = theory_point(inputs)
    return (est.alpha, est.se_alpha) if return_se else est.alpha


def mc_beta(inputs: TheoryInputs, return_se=False):
    """Limit of the power at threshold ``t0``."""
    est = theory_point(inputs)
    return (est.beta, est.se_beta) if return_se else est.beta


def theory_grid(mu0s, t0s, c0, family, n_mc=100_000, seed=0):
    """All (mu0, t0) combinations evaluated on one shared set of draws."""
    Z, Zp = standard_pairs(n_mc, seed)
    return [_estimate(m, t, c0, family, Z, Zp) for m in mu0s for t in t0s]


def write_theory_csv(estimates, path):
    fields = ["mu0", "t0", "c0", "alpha_hat", "alpha", "beta",
              "se_alpha_hat", "se_alpha", "se_beta", "flag"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields)
        wr.writeheader()
        for est in estimates:
            wr.writerow(est.as_row())


# -- threshold equation ---------------------------------------------------

class _RatioCurve:
    """Estimated-FDP limit as a function of raw threshold ``t``."""

    def __init__(self, mu, c0, sigma_rho, family, Z, Zp):
        mu0 = mu / sigma_rho
        d_sig = np.sort(family.value(mu0 + Z) - family.value(Zp)) * sigma_rho
        d_null = np.sort(family.value(Z) - family.value(Zp)) * sigma_rho
        self.c0 = c0
        self.d_sig, self.d_null = d_sig, d_null
        self.m = Z.size

    def _ge(self, arr, t):
        return (self.m - np.searchsorted(arr, t, side="left")) / self.m

    def _le(self, arr, t):
        return np.searchsorted(arr, -t, side="right") / self.m

    def __call__(self, t):
        c0 = self.c0
        null = 0.5 * (self._ge(self.d_null, t) + self._le(self.d_null, t))
        num = c0 * self._le(self.d_sig, t) + (1 - c0) * null
        den = c0 * self._ge(self.d_sig, t) + (1 - c0) * null
        return num / den if den > 0 else math.inf

    def power(self, t):
        return self._ge(self.d_sig, t)

    def fdp(self, t):
        c0 = self.c0
        null = 0.5 * (self._ge(self.d_null, t) + self._le(self.d_null, t))
        den = c0 * self._ge(self.d_sig, t) + (1 - c0) * null
        return (1 - c0) * null / den if den > 0 else math.nan


def solve_threshold(q, mu, lam, c0, sigma_rho, family=None, n_mc=100_000, *, p=2,
                    phi_w=1.0, seed=0, grid_points=200, rel_width=1e-3):
    """Smallest threshold whose predicted estimated-FDP is at most ``q``.

    The left side of the threshold equation is evaluated with ``f(.; lam)``
    (the LCD magnitude by default) and noise ``N(0, sigma_rho^2)``. A
    geometric grid from ``1e-4 sigma_rho sqrt(2 log p)`` to
    ``10 (mu + lam)`` is scanned and the first crossing refined by bisection
    to relative width ``rel_width``. Returns ``inf`` when no grid point works.
    """
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if sigma_rho <= 0:
        raise ValueError("sigma_rho must be positive")
    if family is None:
        family = StatisticFamily("lcd", a=lam, phi_w=phi_w)
    std_family = family.with_scale(family.a / sigma_rho) if family.kind != "abs-debiased" else family
    Z, Zp = standard_pairs(n_mc, seed)
    curve = _RatioCurve(mu, c0, sigma_rho, std_family, Z, Zp)
    lo_t = 1e-4 * sigma_rho * math.sqrt(2 * math.log(max(p, 2)))
    hi_t = 10 * (mu + lam) if mu + lam > 0 else 10 * sigma_rho
    hi_t = max(hi_t, lo_t * 10)
    grid = np.geomspace(lo_t, hi_t, grid_points)
    ok = [curve(t) <= q for t in grid]
    if not any(ok):
        return math.inf
    i = ok.index(True)
    if i == 0:
        return float(grid[0])
    lo, hi = float(grid[i - 1]), float(grid[i])
    while hi / lo - 1 > rel_width:
        mid = math.sqrt(lo * hi)
        if curve(mid) <= q:
            hi = mid
        else:
            lo = mid
    return hi


def threshold_ratio(t, q_unused=None, *, mu, lam, c0, sigma_rho, phi_w=1.0, n_mc=100_000, seed=0,
                    family=None):
    """Evaluate the threshold-equation ratio at raw ``t`` (shares draws with the solver)."""
    if family is None:
        family = StatisticFamily("lcd", a=lam, phi_w=phi_w)
    std_family = family.with_scale(family.a / sigma_rho) if family.kind != "abs-debiased" else family
    Z, Zp = standard_pairs(n_mc, seed)
    return _RatioCurve(mu, c0, sigma_rho, std_family, Z, Zp)(t)


def lcd_predictions(mu, lam, c0, sigma_rho, phi_w, t, n_mc=100_000, seed=0):
    """Predicted (FDP, power, estimated-FDP) at raw threshold ``t`` for the LCD statistic."""
    family = StatisticFamily("lcd", a=lam / sigma_rho, phi_w=phi_w)
    Z, Zp = standard_pairs(n_mc, seed)
    curve = _RatioCurve(mu, c0, sigma_rho, family, Z, Zp)
    return curve.fdp(t), curve.power(t), curve(t)


def power_fdr_curve(mu, lam, c0, sigma_rho, phi_w, t_grid, n_mc=100_000, seed=0):
    """Predicted (FDP, power) pairs along a grid of raw thresholds."""
    family = StatisticFamily("lcd", a=lam / sigma_rho, phi_w=phi_w)
    Z, Zp = standard_pairs(n_mc, seed)
    curve = _RatioCurve(mu, c0, sigma_rho, family, Z, Zp)
    fdr = np.array([curve.fdp(t) for t in t_grid])
    power = np.array([curve.power(t) for t in t_grid])
    return fdr, power


def power_at_fdr(levels, fdr, power):
    """Best predicted power among thresholds whose predicted FDP is within each level."""
    fdr = np.asarray(fdr, dtype=float)
    power = np.asarray(power, dtype=float)
    out = []
    for lev in levels:
        ok = np.isfinite(fdr) & (fdr <= lev)
        out.append(float(power[ok].max()) if ok.any() else 0.0)
    return np.array(out)


# -- sufficient conditions for debiasing -------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    lhs: tuple
    rhs: tuple
    lam: float
    kappa: float
    phi_w: float
    w2: float
    rho: float
    B: float

    @property
    def ratios(self):
        return tuple(l / r for l, r in zip(self.lhs, self.rhs))

    @property
    def passes(self):
        return tuple(l <= r for l, r in zip(self.lhs, self.rhs))

    def as_row(self):
        row = {"lam": self.lam, "kappa": self.kappa, "phi_w": self.phi_w, "w2": self.w2,
               "rho": self.rho, "B": self.B}
        for k, (l, r) in enumerate(zip(self.lhs, self.rhs), start=1):
            row[f"lhs{k}"], row[f"rhs{k}"], row[f"ratio{k}"] = l, r, l / r
        return row


def check_debias_conditions(n, p, s0, r, epsilon, delta, sigma=1.0, C_lambda=1.0, *,
                            b=1.0, b_n=None, B=None) -> ConditionReport:
    """Evaluate both sides of the four sufficient conditions at one parameter point.

    The conditions are asymptotic, so a single point cannot certify them; the
    ratios LHS/RHS are meant to be tracked along a scaling ladder.
    """
    if b_n is None:
        b_n = default_truncation(sigma, n)
    if B is None:
        B = analytic_row_bound(b, p, s0, b_n)
    w2 = compute_w(B, epsilon, delta, r) ** 2
    w = math.sqrt(w2)
    lp = math.log(p)
    lam = default_lambda(sigma, n, p, r, C_lambda)
    phi_w = 1 + w2 / n
    kappa = 2 * lam * math.sqrt(s0) + w2 / n
    rho = rho_n(n, r, w)

    lhs1 = kappa**2 / (lam**2 * phi_w)
    rhs1 = math.sqrt(n / lp) * min(1.0, math.sqrt(r / n), math.sqrt(r * n) / w2)

    lhs2 = math.sqrt(s0)
    rhs2 = max(1 / math.sqrt(n), lp / math.sqrt(r)) / max(
        w * lp / math.sqrt(n * r), (w2 / n) * math.sqrt(lp / r)
    )

    lhs3 = math.sqrt(s0) / (sigma * rho)
    rhs3 = min((n / w2) * math.sqrt(r / lp), math.sqrt(n * r) / (w * lp))

    lhs4 = 4 * kappa**2 / (sigma * rho * lam * phi_w)
    rhs4 = min(math.sqrt(n / lp), math.sqrt(r / lp), (n / w2) * math.sqrt(r / lp),
               math.sqrt(n * r) / (w * lp))
    return ConditionReport((lhs1, lhs2, lhs3, lhs4), (rhs1, rhs2, rhs3, rhs4),
                           lam, kappa, phi_w, w2, rho, B)


def example1_point(p):
    """n = p = r, eps = p^(3/4) sqrt(log p), delta = p^-2, s0 = p^(1/8)/(log p)^2."""
    lp = math.log(p)
    return dict(n=p, p=p, s0=p ** 0.125 / lp**2, r=p, epsilon=p**0.75 * math.sqrt(lp), delta=p**-2.0)


def example2_point(p, c0=0.1):
    """n = p^3 (log p)^6, r = p^2 (log p)^5, eps = 1, delta = p^-4, s0 = c0 p."""
    lp = math.log(p)
    return dict(n=p**3 * lp**6, p=p, s0=c0 * p, r=p**2 * lp**5, epsilon=1.0, delta=p**-4.0)


def condition_ladder(points, **kwargs):
    return [check_debias_conditions(**pt, **kwargs) for pt in points]


# -- exponent regimes -------------------------------------------------------

def regime_conditions(alpha, beta, gamma):
    """The four exponent inequalities for n = p^alpha, r = p^beta, eps = p^gamma."""
    a, b, g = alpha, beta, gamma
    c1 = max(1, 2 + b - 2 * a - 2 * g + min(a, b)) < (
        max(0, 1 + b / 2 - a - g) + min(b / 2, a / 2, a + g - 1)
    )
    c2 = max(1 - b / 4 - a / 2 - g / 2, 1.5 - a - g) < max(-a / 2, -b / 2)
    c3 = 1 + min(a, b, a + g + b / 2 - 1) < min(2 * a + 2 * g - 2, b / 2 + a + g - 1)
    c4 = (min(a / 2, b / 2, a / 2 + g / 2 - 0.5 + b / 4) + max(1 - min(a, b), 2 + b - 2 * a - 2 * g)
          < -0.5 * min(a, b) + max(0, 1 + b / 2 - a - g)
          + min(a / 2, b / 2, a + g - 1, b / 4 + (a + g) / 2 - 0.5))
    return (c1, c2, c3, c4)


@dataclass(frozen=True)
class RegimeResult:
    feasible: bool
    witness_beta: float
    feasible_betas: tuple


def regime_feasible(alpha, gamma, beta_grid=None) -> RegimeResult:
    """Scan ``beta`` for a point where all four inequalities hold strictly."""
    if beta_grid is None:
        beta_grid = np.linspace(0.0, 10.0, 4001)
    good = tuple(float(b) for b in beta_grid if all(regime_conditions(alpha, b, gamma)))
    return RegimeResult(bool(good), good[0] if good else math.nan, good)
