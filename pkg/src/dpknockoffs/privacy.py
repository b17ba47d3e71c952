"""JLT sketch privatization and the Gaussian second-moment mechanism.

The JLT release is ``R [A; w I]`` with ``R`` having i.i.d. N(0, 1/r) entries.
``R`` is never stored: its columns are generated tile by tile from seeds
keyed on ``(seed, tile index)`` and the products are summed in tile order, so
the output does not depend on how the caller chunks the rows of ``A``.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import stream
from .knockoff import AugmentedMatrix

TILE_ROWS = 512
_MAGIC = b"DPJLT001"
_HEADER = struct.Struct("<8sQQdddQd")


class RowNormError(ValueError):
    """A data row exceeds the declared l2 bound B."""

    def __init__(self, row, norm, bound):
        super().__init__(f"row {row} has l2 norm {norm:.6g} > bound B={bound:.6g}")
        self.row = row
        self.norm = norm
        self.bound = bound


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1 / math.e:
            raise ValueError(f"delta must lie in (0, 1/e), got {self.delta}")


@dataclass(frozen=True)
class JltParams:
    r: int
    B: float
    w: float
    epsilon: float
    delta: float


def compute_w(B, epsilon, delta, r) -> float:
    """Augmentation scale: w^2 = (4 B^2 / eps) (sqrt(2 r log(4/delta)) + log(4/delta))."""
    PrivacyBudget(epsilon, delta)
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if B < 0:
        raise ValueError(f"B must be non-negative, got {B}")
    L = math.log(4.0 / delta)
    return math.sqrt(4.0 * B**2 / epsilon * (math.sqrt(2.0 * r * L) + L))


def gaussian_noise_sigma(B, epsilon, delta) -> float:
    PrivacyBudget(epsilon, delta)
    return 2.0 * math.sqrt(math.log(1.25 / delta)) * B**2 / epsilon


@dataclass(frozen=True)
class PrivatizedData:
    """Split JLT release ``A* = [X* Xk* y*]`` plus its parameters.

    ``R`` (full projection) and ``R_aug`` (the ``r x (2p+1)`` columns that
    multiply ``w I``) are only populated when requested, for debugging and
    simulation identities.
    """

    Xstar: np.ndarray
    Xtildestar: np.ndarray
    ystar: np.ndarray
    params: JltParams
    n: int
    p: int
    R: Optional[np.ndarray] = None
    R_aug: Optional[np.ndarray] = None

    @property
    def r(self) -> int:
        return self.Xstar.shape[0]

    @property
    def w(self) -> float:
        return self.params.w

    @property
    def features(self) -> np.ndarray:
        return np.hstack([self.Xstar, self.Xtildestar])

    @property
    def Astar(self) -> np.ndarray:
        return np.hstack([self.Xstar, self.Xtildestar, self.ystar[:, None]])

    def _require_R(self):
        if self.R is None:
            raise ValueError("projection matrix not retained; privatize with keep='full'")
        return self.R

    @property
    def R1(self):
        return self._require_R()[:, : self.n]

    @property
    def R2(self):
        return self._require_R()[:, self.n : self.n + 2 * self.p]

    @property
    def R3(self):
        return self._require_R()[:, self.n + 2 * self.p]

    def gram(self) -> np.ndarray:
        """(1/n) [X* Xk*]^T [X* Xk*]."""
        F = self.features
        return F.T @ F / self.n

    # -- serialization -------------------------------------------------
    def to_bytes(self) -> bytes:
        p = self.params
        head = _HEADER.pack(_MAGIC, self.r, self.p, p.w, p.epsilon, p.delta, self.n, p.B)
        body = np.ascontiguousarray(self.Astar, dtype="<f8").tobytes()
        return head + body

    def dump(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "PrivatizedData":
        if len(data) < _HEADER.size:
            raise ValueError("truncated JLT dump header")
        magic, r, p, w, eps, delta, n, B = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        expected = _HEADER.size + 8 * r * (2 * p + 1)
        if len(data) != expected:
            raise ValueError(f"dump has {len(data)} bytes, expected {expected}")
        A = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(r, 2 * p + 1)
        A = A.astype(float)
        return cls(A[:, :p], A[:, p : 2 * p], A[:, 2 * p], JltParams(r, B, w, eps, delta), n, p)

    @classmethod
    def load(cls, path) -> "PrivatizedData":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path_or_buf=None):
        cols = [f"x{j + 1}" for j in range(self.p)] + [f"xk{j + 1}" for j in range(self.p)] + ["y"]
        buf = io.StringIO()
        np.savetxt(buf, self.Astar, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                fh.write(text)


def _row_blocks(A, block_size):
    if isinstance(A, AugmentedMatrix):
        A = A.A
    if isinstance(A, np.ndarray):
        if A.ndim != 2:
            raise ValueError("A must be 2-D")
        step = max(1, int(block_size or A.shape[0] or 1))
        for i in range(0, A.shape[0], step):
            yield A[i : i + step]
    else:
        for blk in A:
            yield np.atleast_2d(np.asarray(blk, dtype=float))


def _take(queue, k):
    """Pop ``k`` rows from the front of a list of arrays, copying only those rows."""
    parts, need = [], k
    while need:
        head = queue[0]
        if head.shape[0] <= need:
            parts.append(queue.pop(0))
            need -= head.shape[0]
        else:
            parts.append(head[:need])
            queue[0] = head[need:]
            need = 0
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def _tiles(blocks, B, w, tile_rows, meta):
    """Regroup data rows, then the ``w I`` rows, into fixed-size tiles.

    Yields ``(tile_index, start_row, rows)`` and records the data shape
    ``(n, d)`` in ``meta`` once the input is exhausted.
    """
    queue, have, start, tile_idx = [], 0, 0, 0
    n, d = 0, None
    tol = B * (1 + 1e-12) + 1e-300
    for blk in blocks:
        if blk.size == 0:
            continue
        if d is None:
            d = blk.shape[1]
        elif blk.shape[1] != d:
            raise ValueError("row blocks have inconsistent widths")
        if not np.all(np.isfinite(blk)):
            raise ValueError("non-finite entries in A")
        norms = np.sqrt(np.einsum("ij,ij->i", blk, blk))
        bad = np.flatnonzero(norms > tol)
        if bad.size:
            raise RowNormError(n + int(bad[0]), float(norms[bad[0]]), B)
        n += blk.shape[0]
        queue.append(blk)
        have += blk.shape[0]
        while have >= tile_rows:
            yield tile_idx, start, _take(queue, tile_rows)
            tile_idx += 1
            start += tile_rows
            have -= tile_rows
    if d is None:
        raise ValueError("A has no rows")
    meta["n"], meta["d"] = n, d
    queue.append(w * np.eye(d))
    have += d
    while have:
        k = min(tile_rows, have)
        yield tile_idx, start, _take(queue, k)
        tile_idx += 1
        start += k
        have -= k


def jlt_project(A, r, w, seed, B=math.inf, block_size=None, keep="none", tile_rows=TILE_ROWS):
    """Stream ``R [A; w I]``; returns ``(Astar, n, R_or_None, R_aug_or_None)``."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    scale = 1.0 / math.sqrt(r)
    acc = None
    kept = []
    meta = {}
    for tile_idx, start, rows in _tiles(_row_blocks(A, block_size), B, w, tile_rows, meta):
        Rt = stream(seed, "jlt", tile_idx).standard_normal((r, rows.shape[0]))
        Rt *= scale
        prod = Rt @ rows
        acc = prod if acc is None else acc + prod
        if keep != "none":
            kept.append((start, Rt))
    n = meta["n"]
    R = R_aug = None
    if keep == "full":
        R = np.concatenate([Rt for _, Rt in kept], axis=1)
        R_aug = R[:, n:]
    elif keep == "identity":
        cols = []
        for start, Rt in kept:
            lo = max(n - start, 0)
            if lo < Rt.shape[1]:
                cols.append(Rt[:, lo:])
        R_aug = np.concatenate(cols, axis=1)
    elif keep != "none":
        raise ValueError(f"keep must be 'none', 'identity' or 'full', got {keep!r}")
    return acc, n, R, R_aug


def jlt_privatize(A, budget: PrivacyBudget, r, seed=None, *, B=None, block_size=None,
                  keep="none", w=None, projection=None) -> PrivatizedData:
    """JLT privatization of the augmented matrix ``[X Xk y]``.

    Parameters
    ----------
    A : AugmentedMatrix, ndarray or iterable of row blocks
        Data with ``2p+1`` columns. Iterables are consumed once, so ``A`` may
        come from disk in chunks.
    budget : PrivacyBudget
    r : int
        Number of rows of the projection.
    B : float, optional
        Public row-norm bound. Defaults to the realized maximum row norm of an
        in-memory ``A``, which is data-dependent and therefore not private.
    keep : {"none", "identity", "full"}
        Retain nothing, the columns of ``R`` hitting ``w I``, or all of ``R``.
    w : float, optional
        Override the augmentation scale (debug only; voids the guarantee).
    projection : ndarray, optional
        Explicit ``r x (n + 2p + 1)`` projection (debug injection).
    """
    if isinstance(A, AugmentedMatrix):
        p = A.p
        data = A.A
    else:
        data = A
        p = None
    if B is None:
        if not isinstance(data, np.ndarray):
            raise ValueError("B is required when A is streamed")
        B = float(np.sqrt(np.max(np.einsum("ij,ij->i", data, data))))
    if w is None:
        w = compute_w(B, budget.epsilon, budget.delta, r)

    if projection is not None:
        data = np.asarray(data, dtype=float)
        n, d = data.shape
        norms = np.sqrt(np.einsum("ij,ij->i", data, data))
        bad = np.flatnonzero(norms > B * (1 + 1e-12))
        if bad.size:
            raise RowNormError(int(bad[0]), float(norms[bad[0]]), B)
        R = np.asarray(projection, dtype=float)
        if R.shape != (r, n + d):
            raise ValueError(f"projection must be {r}x{n + d}, got {R.shape}")
        Astar = R @ np.vstack([data, w * np.eye(d)])
        R_aug = R[:, n:]
        R = R if keep == "full" else None
        R_aug = R_aug if keep != "none" else None
    else:
        Astar, n, R, R_aug = jlt_project(data, r, w, seed, B=B, block_size=block_size, keep=keep)
    d = Astar.shape[1]
    if p is None:
        if d % 2 != 1:
            raise ValueError("A must have an odd number (2p+1) of columns")
        p = (d - 1) // 2
    elif d != 2 * p + 1:
        raise ValueError("column count changed while streaming")
    params = JltParams(int(r), float(B), float(w), budget.epsilon, budget.delta)
    return PrivatizedData(Astar[:, :p], Astar[:, p : 2 * p], Astar[:, 2 * p], params, n, p, R, R_aug)


@dataclass(frozen=True)
class PrivateMoments:
    """Gaussian-mechanism release of ``[X Xk y]^T [X Xk y]``, partitioned.

    ``G`` is symmetric but not necessarily positive semi-definite.
    """

    G: np.ndarray
    c: np.ndarray
    yy: float
    sigma_noise: float
    n: int

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.G)[0])

    def is_psd(self, tol=0.0) -> bool:
        return self.min_eigenvalue() >= -tol


def symmetric_noise(d, sigma, rng) -> np.ndarray:
    """Symmetric matrix whose upper triangle (with diagonal) is i.i.d. N(0, sigma^2)."""
    Z = np.zeros((d, d))
    iu = np.triu_indices(d)
    Z[iu] = rng.normal(0.0, 1.0, size=iu[0].size) * sigma
    return Z + np.triu(Z, 1).T


def gaussian_privatize_moments(A, budget: PrivacyBudget, seed=None, *, B=None,
                               sigma_noise=None) -> PrivateMoments:
    """Algorithm: add symmetric Gaussian noise to the second-moment matrix."""
    if isinstance(A, AugmentedMatrix):
        data = A.A
    else:
        data = np.asarray(A, dtype=float)
    n, d = data.shape
    norms = np.sqrt(np.einsum("ij,ij->i", data, data))
    if B is None:
        B = float(norms.max())
    bad = np.flatnonzero(norms > B * (1 + 1e-12))
    if bad.size:
        raise RowNormError(int(bad[0]), float(norms[bad[0]]), B)
    if sigma_noise is None:
        sigma_noise = gaussian_noise_sigma(B, budget.epsilon, budget.delta)
    M = data.T @ data
    M = np.triu(M) + np.triu(M, 1).T
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "gaussian-mechanism")
    M = M + symmetric_noise(d, sigma_noise, rng)
    q = d - 1
    return PrivateMoments(M[:q, :q].copy(), M[:q, q].copy(), float(M[q, q]), float(sigma_noise), n)
