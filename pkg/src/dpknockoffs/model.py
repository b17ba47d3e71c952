"""Linear model, bounded Model-X designs, truncated noise and CSV ingestion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from ._rng import as_generator, stream

DESIGN_KINDS = ("scaled-rademacher", "truncated-uniform", "custom-bounded")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class DesignDistribution:
    """Centered, bounded law for the i.i.d. design entries.

    Parameters
    ----------
    kind : str
        ``"scaled-rademacher"``, ``"truncated-uniform"`` or ``"custom-bounded"``.
    b : float
        Declared support bound; every sample lies in ``[-b, b]``.
    normalize : bool
        Rescale the law to unit variance. With normalization a Rademacher law
        takes values ``+-1`` (needs ``b >= 1``) and a uniform law lives on
        ``[-sqrt(3), sqrt(3)]`` (needs ``b >= sqrt(3)``).
    sampler : callable, optional
        ``sampler(rng, shape) -> ndarray`` for ``kind="custom-bounded"``.
        Draws are validated against ``b``.
    """

    kind: str = "scaled-rademacher"
    b: float = 1.0
    normalize: bool = True
    sampler: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}; expected one of {DESIGN_KINDS}")
        if not (self.b > 0 and math.isfinite(self.b)):
            raise ValueError(f"bound b must be positive and finite, got {self.b}")
        if kind == "custom-bounded" and self.sampler is None:
            raise ValueError("custom-bounded design requires a sampler")
        if self.normalize and self.support > self.b * (1 + 1e-12):
            raise ValueError(
                f"{kind} law cannot be normalized to unit variance within [-{self.b}, {self.b}]"
            )

    @property
    def support(self) -> float:
        """Largest attainable |entry|."""
        if self.kind == "scaled-rademacher":
            return 1.0 if self.normalize else self.b
        if self.kind == "truncated-uniform":
            return math.sqrt(3.0) if self.normalize else self.b
        return self.b

    @property
    def variance(self) -> float:
        if self.kind == "scaled-rademacher":
            return self.support**2
        if self.kind == "truncated-uniform":
            return self.support**2 / 3.0
        return 1.0 if self.normalize else float("nan")

    def sample(self, rng, shape) -> np.ndarray:
        rng = as_generator(rng)
        if self.kind == "scaled-rademacher":
            out = self.support * (2.0 * rng.integers(0, 2, size=shape) - 1.0)
        elif self.kind == "truncated-uniform":
            out = rng.uniform(-self.support, self.support, size=shape)
        else:
            out = np.asarray(self.sampler(rng, shape), dtype=float)
            if out.shape != tuple(np.atleast_1d(shape)) and out.shape != tuple(shape):
                raise DataError(f"custom sampler returned shape {out.shape}, expected {shape}")
            if np.max(np.abs(out), initial=0.0) > self.b:
                raise DataError("custom sampler produced values outside [-b, b]")
        return out


@dataclass(frozen=True)
class NoiseSpec:
    """Truncated Gaussian noise TN(0, sigma^2, b_n).

    ``truncation=None`` selects the default ``b_n = sigma * sqrt(4 log n)``,
    which is resolved by :meth:`for_n`.
    """

    sigma: float = 1.0
    truncation: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.truncation is not None and not self.truncation > 0:
            raise ValueError(f"truncation b_n must be positive, got {self.truncation}")

    def for_n(self, n: int) -> "NoiseSpec":
        if self.truncation is not None:
            return self
        return NoiseSpec(self.sigma, default_truncation(self.sigma, n))

    @property
    def b_n(self) -> float:
        if self.truncation is None:
            raise ValueError("truncation not resolved; call for_n(n) first")
        return self.truncation

    @property
    def truncated_variance(self) -> float:
        """Variance of the truncated law (closed form)."""
        c = self.b_n / self.sigma
        if math.isinf(c):
            return self.sigma**2
        mass = 2.0 * stats.norm.cdf(c) - 1.0
        return self.sigma**2 * (1.0 - 2.0 * c * stats.norm.pdf(c) / mass)

    @property
    def sigma_n(self) -> float:
        return math.sqrt(self.truncated_variance)


def default_truncation(sigma: float, n: int) -> float:
    return sigma * math.sqrt(4.0 * math.log(max(n, 2)))


@dataclass(frozen=True)
class ModelSpec:
    n: int
    p: int
    theta0: np.ndarray

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float)
        if theta0.shape != (self.p,):
            raise DataError(f"theta0 must have length p={self.p}, got shape {theta0.shape}")
        if self.n < 1 or self.p < 1:
            raise DataError("n and p must be positive")
        object.__setattr__(self, "theta0", theta0)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.theta0)

    @property
    def s0(self) -> int:
        return int(np.count_nonzero(self.theta0))

    @classmethod
    def constant_signal(cls, n, p, s0, mu, normalize=False, support=None):
        """theta0 equal to ``mu`` on the first ``s0`` coordinates (or ``support``).

        With ``normalize=True`` the vector is rescaled to unit l2 norm.
        """
        if not 0 <= s0 <= p:
            raise DataError(f"s0 must lie in [0, p], got {s0}")
        theta0 = np.zeros(p)
        idx = np.arange(s0) if support is None else np.asarray(support, dtype=int)
        theta0[idx] = mu
        if normalize:
            norm = np.linalg.norm(theta0)
            if norm == 0:
                raise DataError("cannot normalize a zero signal")
            theta0 = theta0 / norm
        return cls(n, p, theta0)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    model: Optional[ModelSpec] = None
    noise: Optional[np.ndarray] = None
    knockoffs: Optional[np.ndarray] = None
    b: Optional[float] = None
    columns: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"inconsistent shapes X{X.shape}, y{y.shape}")
        if self.knockoffs is not None and np.shape(self.knockoffs) != X.shape:
            raise DataError("knockoff matrix must match X in shape")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def generate_design(n, p, dist: DesignDistribution, seed=None) -> np.ndarray:
    """Draw an ``n x p`` matrix of i.i.d. entries from ``dist``."""
    if n < 1 or p < 1:
        raise DataError(f"design needs n, p >= 1, got n={n}, p={p}")
    rng = stream(seed, "design") if not isinstance(seed, np.random.Generator) else seed
    return dist.sample(rng, (n, p))


def sample_noise(n, spec: NoiseSpec, seed=None) -> np.ndarray:
    """Rejection sampler for TN(0, sigma^2, b_n); redraws until all |xi| <= b_n."""
    if n < 0:
        raise DataError("n must be non-negative")
    spec = spec.for_n(n)
    rng = stream(seed, "noise") if not isinstance(seed, np.random.Generator) else seed
    out = rng.normal(0.0, spec.sigma, size=n)
    bad = np.flatnonzero(np.abs(out) > spec.b_n)
    while bad.size:
        out[bad] = rng.normal(0.0, spec.sigma, size=bad.size)
        bad = bad[np.abs(out[bad]) > spec.b_n]
    return out


def synthesize(model: ModelSpec, design: np.ndarray, noise: np.ndarray, b=None) -> Dataset:
    """Build ``y = X theta0 + xi``."""
    design = np.asarray(design, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if design.shape != (model.n, model.p) or noise.shape != (model.n,):
        raise DataError(
            f"dimension mismatch: model (n={model.n}, p={model.p}), "
            f"design {design.shape}, noise {noise.shape}"
        )
    y = design @ model.theta0 + noise
    return Dataset(design, y, model=model, noise=noise, b=b)


def analytic_row_bound(b, p, s0, b_n, theta_l1=None) -> float:
    """sqrt(2 p b^2 + (b ||theta0||_1 + b_n)^2).

    ``theta_l1`` defaults to ``sqrt(s0)``, the worst case for a unit-norm
    ``s0``-sparse signal.
    """
    if theta_l1 is None:
        theta_l1 = math.sqrt(s0)
    return math.sqrt(2.0 * p * b**2 + (b * theta_l1 + b_n) ** 2)


def row_norm_bound(X=None, Xk=None, y=None, *, b=None, s0=None, b_n=None, p=None, theta_l1=None):
    """Bound on the l2 norm of every row of ``[X Xk y]``.

    Returns the realized maximum row norm when data are given, otherwise the
    analytic bound from the model parameters ``(b, s0, b_n, p)``.
    """
    if X is not None:
        parts = [np.asarray(X, dtype=float)]
        if Xk is not None:
            parts.append(np.asarray(Xk, dtype=float))
        if y is not None:
            parts.append(np.asarray(y, dtype=float).reshape(-1, 1))
        sq = sum(np.einsum("ij,ij->i", a, a) for a in parts)
        return float(np.sqrt(np.max(sq, initial=0.0)))
    if None in (b, s0, b_n, p):
        raise ValueError("analytic bound needs b, s0, b_n and p")
    return analytic_row_bound(b, p, s0, b_n, theta_l1)


def load_csv(path, response_column="y", bound_policy="scale", clip_bound=None,
             drop_constant=False, standardize_response=True) -> Dataset:
    """Read a numeric CSV with a header row into a standardized Dataset.

    Columns are centered and scaled to unit sample variance. ``bound_policy``
    is ``"scale"`` (record b as the post-standardization max |entry|) or
    ``"clip"`` (clip entries to ``[-clip_bound, clip_bound]``). Constant
    columns raise unless ``drop_constant`` is set.

    The resulting bound is data-dependent, which is itself a privacy leak;
    a warning is emitted so callers do not mistake it for a public bound.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {col!r}"
                    ) from None
            rows.append(vals)
    if response_column not in header:
        raise DataError(f"{path}: response column {response_column!r} not found")
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values present")
    iy = header.index(response_column)
    y = data[:, iy]
    feat_names = [h for i, h in enumerate(header) if i != iy]
    X = np.delete(data, iy, axis=1)

    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    if np.any(const):
        names = [feat_names[i] for i in np.flatnonzero(const)]
        if not drop_constant:
            raise DataError(f"{path}: constant column(s) cannot be standardized: {names}")
        keep = ~const
        X, sd = X[:, keep], sd[keep]
        feat_names = [nm for nm, k in zip(feat_names, keep) if k]
    if X.shape[1] == 0:
        raise DataError(f"{path}: no usable feature columns")
    X = (X - X.mean(axis=0)) / sd
    if standardize_response:
        ysd = y.std(ddof=1) if y.size > 1 else 0.0
        y = y - y.mean()
        if ysd > 0:
            y = y / ysd

    if bound_policy == "clip":
        if clip_bound is None or clip_bound <= 0:
            raise ValueError("clip policy needs a positive clip_bound")
        X = np.clip(X, -clip_bound, clip_bound)
        b = float(clip_bound)
    elif bound_policy == "scale":
        b = float(np.max(np.abs(X)))
    else:
        raise ValueError(f"unknown bound_policy {bound_policy!r}")
    warnings.warn(
        "bound b inferred from the data; it is not a public constant and leaks information",
        stacklevel=2,
    )
    return Dataset(X, y, b=b, columns=tuple(feat_names))
