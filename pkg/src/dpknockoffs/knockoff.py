"""Model-X knockoffs for i.i.d. designs and the augmented matrix [X Xk y]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .model import DataError, DesignDistribution


def sample_knockoffs(n, p, dist: DesignDistribution, seed=None) -> np.ndarray:
    """Independent copy of the design law.

    With i.i.d. entries an independent draw is a valid knockoff. The draw uses
    the ``"knockoff"`` stream so it never shares random numbers with the
    design generated from the same seed.
    """
    if n < 1 or p < 1:
        raise DataError(f"knockoffs need n, p >= 1, got n={n}, p={p}")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "knockoff")
    return dist.sample(rng, (n, p))


@dataclass(frozen=True)
class AugmentedMatrix:
    """``A = [X Xk y]`` with ``p`` original, ``p`` knockoff and one response column."""

    A: np.ndarray
    p: int

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape[1] != 2 * self.p + 1:
            raise DataError(f"augmented matrix must have 2p+1={2 * self.p + 1} columns")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def X(self):
        return self.A[:, : self.p]

    @property
    def Xk(self):
        return self.A[:, self.p : 2 * self.p]

    @property
    def y(self):
        return self.A[:, 2 * self.p]

    @property
    def features(self):
        return self.A[:, : 2 * self.p]

    def split(self):
        return self.X, self.Xk, self.y

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.A, self.A))


def augment(X, Xk, y) -> AugmentedMatrix:
    X = np.asarray(X, dtype=float)
    Xk = np.asarray(Xk, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DataError("X must be a non-empty 2-D matrix")
    if Xk.shape != X.shape:
        raise DataError(f"knockoffs {Xk.shape} do not match X {X.shape}")
    if y.shape != (X.shape[0],):
        raise DataError(f"response length {y.shape} does not match n={X.shape[0]}")
    A = np.hstack([X, Xk, y[:, None]])
    A.setflags(write=False)
    return AugmentedMatrix(A, X.shape[1])
