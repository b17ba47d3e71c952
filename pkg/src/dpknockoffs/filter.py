"""Knockoff feature statistics, data-dependent thresholds and selection metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FAMILY_KINDS = ("abs-debiased", "lcd", "custom")


@dataclass(frozen=True)
class StatisticFamily:
    """Scale-covariant magnitude function ``f(x; a)`` applied to debiased coordinates.

    ``abs-debiased`` is ``|x|``. ``lcd`` is ``(|x| - a)_+ / phi_w``; applied to
    the debiased estimate with ``a = lambda`` it reproduces ``|theta*_j|``.
    ``custom`` wraps ``fn(x, a)``; the Lipschitz constant ``L`` and growth
    constants ``c_a``, ``c_x`` are carried as metadata only.
    """

    kind: str = "abs-debiased"
    a: float = 1.0
    phi_w: float = 1.0
    fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    L: Optional[float] = None
    c_a: Optional[float] = None
    c_x: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown statistic family {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom family needs fn")
        if self.phi_w <= 0:
            raise ValueError("phi_w must be positive")

    def value(self, x, a=None):
        a = self.a if a is None else a
        x = np.asarray(x, dtype=float)
        if self.kind == "abs-debiased":
            return np.abs(x)
        if self.kind == "lcd":
            return np.maximum(np.abs(x) - a, 0.0) / self.phi_w
        return np.asarray(self.fn(x, a), dtype=float)

    __call__ = value

    def with_scale(self, a) -> "StatisticFamily":
        return StatisticFamily(self.kind, a, self.phi_w, self.fn, self.L, self.c_a, self.c_x)

    @classmethod
    def lcd(cls, lam, w=0.0, n=1):
        return cls("lcd", a=lam, phi_w=1.0 + w * w / n)


@dataclass(frozen=True)
class SelectionResult:
    W: np.ndarray
    t_hat: float
    selected: np.ndarray
    fdp_hat_at_t: float
    plus: bool
    q: float

    @property
    def k_selected(self) -> int:
        return int(self.selected.size)


def feature_statistics(estimate, family: StatisticFamily) -> np.ndarray:
    """W_j = f(v_j) - f(v_{j+p})."""
    v = np.asarray(estimate, dtype=float)
    if v.ndim != 1 or v.size % 2:
        raise ValueError(f"estimate must be a vector of even length, got shape {v.shape}")
    p = v.size // 2
    fv = family.value(v)
    return fv[:p] - fv[p:]


def fdp_hat(W, t, plus=True) -> float:
    if not t > 0:
        raise ValueError(f"threshold must be positive, got {t}")
    W = np.asarray(W, dtype=float)
    neg = np.count_nonzero(W <= -t)
    pos = np.count_nonzero(W >= t)
    return (int(plus) + neg) / max(pos, 1)


def knockoff_threshold(W, q, plus=True) -> float:
    """Smallest nonzero |W_j| whose estimated FDP is at most ``q``; +inf if none."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    W = np.asarray(W, dtype=float)
    cand = np.unique(np.abs(W[W != 0]))
    if cand.size == 0:
        return math.inf
    srt = np.sort(W)
    neg = np.searchsorted(srt, -cand, side="right")
    pos = W.size - np.searchsorted(srt, cand, side="left")
    ratio = (int(plus) + neg) / np.maximum(pos, 1)
    ok = np.flatnonzero(ratio <= q)
    return float(cand[ok[0]]) if ok.size else math.inf


def select(W, t_hat) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if math.isinf(t_hat):
        return np.array([], dtype=int)
    return np.flatnonzero(W >= t_hat)


def run_filter(W, q, plus=True) -> SelectionResult:
    t = knockoff_threshold(W, q, plus)
    sel = select(W, t)
    fh = fdp_hat(W, t, plus) if math.isfinite(t) else math.nan
    return SelectionResult(np.asarray(W, dtype=float), t, sel, fh, bool(plus), float(q))


def evaluate(selected, S0):
    """(FDP, Power) of a selection against the true support."""
    S0 = set(int(j) for j in np.atleast_1d(S0))
    if not S0:
        raise ValueError("power is undefined for an empty true support (s0 = 0)")
    sel = set(int(j) for j in np.atleast_1d(selected))
    false = len(sel - S0)
    fdp = false / max(len(sel), 1)
    power = len(sel & S0) / len(S0)
    return fdp, power


SELECTION_FIELDS = ("seed", "q", "plus", "t_hat", "k_selected", "fdp", "power")


def write_selection_csv(rows, path):
    """Write dicts with :data:`SELECTION_FIELDS` keys as a CSV table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SELECTION_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
