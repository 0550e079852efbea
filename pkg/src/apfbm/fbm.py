"""Fractional Brownian motion on uniform grids.

Two exact samplers are provided: a Cholesky factorisation of the covariance
matrix of the path values (O(N^3), kept as the reference) and circulant
embedding of fractional Gaussian noise (Davies-Harte, O(N log N), the
default).  Both return paths with ``values[0] == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "TimeGrid",
    "FbmPath",
    "check_hurst",
    "fbm_covariance",
    "fgn_autocovariance",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "fbm_paths",
    "holder_seminorm",
    "CHOLESKY_MAX_N",
]

CHOLESKY_MAX_N = 4096
EIGEN_TOL = 1e-12
MAX_DOUBLINGS = 8


def check_hurst(h: float, strict: bool = False) -> float:
    """Validate a Hurst index.

    ``h = 0.5`` (standard Brownian motion) is accepted unless ``strict`` is
    set, in which case ``h`` must lie in the open interval (1/2, 1).
    """
    h = float(h)
    if strict and not 0.5 < h < 1.0:
        raise ValueError(f"h must be > 0.5 and < 1, got {h}")
    if not 0.5 <= h < 1.0:
        raise ValueError(f"h must lie in [0.5, 1), got {h}")
    return h


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * dt`` on ``[0, T]`` with ``N`` steps."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be a positive finite time, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        if not 0 <= n <= self.N:
            raise IndexError(f"grid index {n} outside [0, {self.N}]")
        return self.T if n == self.N else n * self.dt

    @property
    def times(self) -> np.ndarray:
        ts = np.arange(self.N + 1) * self.dt
        ts[-1] = self.T
        return ts

    def coarsen(self, factor: int) -> "TimeGrid":
        """Grid keeping every ``factor``-th point."""
        if factor < 1 or self.N % factor:
            raise ValueError(f"cannot coarsen N={self.N} by {factor}")
        return TimeGrid(self.T, self.N // factor)


@dataclass(frozen=True)
class FbmPath:
    grid: TimeGrid
    h: float
    values: np.ndarray
    increments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.N + 1,):
            raise ValueError(f"expected {self.grid.N + 1} values, got shape {values.shape}")
        if values[0] != 0.0:
            raise ValueError("fBm paths start at 0")
        values.setflags(write=False)
        incs = np.diff(values)
        incs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "increments", incs)

    def coarsen(self, factor: int) -> "FbmPath":
        """The same path observed on a grid ``factor`` times coarser."""
        return FbmPath(self.grid.coarsen(factor), self.h, self.values[::factor])


def fbm_covariance(t, s, h: float):
    """Covariance ``R(t, s) = (t^2H + s^2H - |t - s|^2H) / 2``.

    Works elementwise on arrays.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("fbm_covariance is defined for non-negative times only")
    two_h = 2.0 * h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, h: float):
    """Autocovariance at integer lag ``k`` of unit-step fractional Gaussian noise."""
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * h
    return 0.5 * ((k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)


def _first_failing_pivot(cov: np.ndarray) -> tuple[int, float]:
    n = cov.shape[0]
    L = np.zeros_like(cov)
    for j in range(n):
        d = cov[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0:
            return j, float(d)
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (cov[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return n, float("nan")


@lru_cache(maxsize=32)
def _cholesky_factor(N: int, h: float) -> np.ndarray:
    # unit-step grid; values at dt are scaled by dt^H (self-similarity)
    ts = np.arange(1, N + 1, dtype=float)
    cov = fbm_covariance(ts[:, None], ts[None, :], h)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        j, d = _first_failing_pivot(cov)
        raise np.linalg.LinAlgError(
            f"fBm covariance (N={N}, h={h}) is not positive definite: pivot {j} = {d:.3e}"
        ) from None
    L.setflags(write=False)
    return L


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(N: int, h: float) -> np.ndarray:
    """Square roots of the circulant embedding eigenvalues, scaled for the FFT."""
    m = N
    for _ in range(MAX_DOUBLINGS + 1):
        gam = fgn_autocovariance(np.arange(m + 1), h)
        row = np.concatenate([gam, gam[-2:0:-1]])
        lam = np.fft.fft(row).real
        floor = -EIGEN_TOL * lam.max()
        if lam.min() >= floor:
            lam = np.where(lam < 0, 0.0, lam)
            out = np.sqrt(lam / row.size)
            out.setflags(write=False)
            return out
        m *= 2
    raise np.linalg.LinAlgError(
        f"circulant embedding for N={N}, h={h} has negative eigenvalue {lam.min():.3e} "
        f"after {MAX_DOUBLINGS} doublings"
    )


def _fgn_circulant(N: int, h: float, rng: np.random.Generator, n_paths: int) -> np.ndarray:
    sq = _circulant_sqrt_eigs(N, h)
    size = sq.size
    w = rng.standard_normal((n_paths, size)) + 1j * rng.standard_normal((n_paths, size))
    return np.fft.fft(sq * w, axis=-1).real[:, :N]


def fbm_paths(
    grid: TimeGrid,
    h: float,
    rng: np.random.Generator,
    n_paths: int,
    method: str = "circulant",
    cholesky_max_n: int = CHOLESKY_MAX_N,
) -> np.ndarray:
    """Sample ``n_paths`` fBm paths; returns an array of shape ``(n_paths, N + 1)``."""
    h = check_hurst(h)
    N = grid.N
    scale = grid.dt**h
    out = np.zeros((n_paths, N + 1))
    if method == "circulant":
        out[:, 1:] = np.cumsum(_fgn_circulant(N, h, rng, n_paths), axis=1) * scale
    elif method == "cholesky":
        if N > cholesky_max_n:
            raise ValueError(f"N={N} exceeds cholesky_max_n={cholesky_max_n}")
        L = _cholesky_factor(N, h)
        out[:, 1:] = rng.standard_normal((n_paths, N)) @ L.T * scale
    else:
        raise ValueError(f"unknown fBm sampling method {method!r}")
    return out


def sample_fbm_cholesky(grid: TimeGrid, h: float, rng: np.random.Generator,
                        cholesky_max_n: int = CHOLESKY_MAX_N) -> FbmPath:
    values = fbm_paths(grid, h, rng, 1, method="cholesky", cholesky_max_n=cholesky_max_n)[0]
    return FbmPath(grid, h, values)


def sample_fbm_circulant(grid: TimeGrid, h: float, rng: np.random.Generator) -> FbmPath:
    return FbmPath(grid, h, fbm_paths(grid, h, rng, 1, method="circulant")[0])


def holder_seminorm(values, alpha: float, grid: TimeGrid, a: float = 0.0, b: float | None = None,
                    anchored: bool = True) -> float:
    """Discrete alpha-Hölder seminorm of a grid signal over ``[a, b]``.

    The supremum of ``|f(t2) - f(t1)| / (t2 - t1)**alpha`` is taken over grid
    points ``a <= t1 < t2 <= b``.  For a signal known only on the grid the
    anchored variant (left point restricted to the grid) and the plain one
    coincide, so ``anchored`` only documents intent here.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N + 1,):
        raise ValueError(f"expected {grid.N + 1} values, got shape {values.shape}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    b = grid.T if b is None else b
    if not 0.0 <= a < b <= grid.T * (1 + 1e-12):
        raise ValueError(f"need 0 <= a < b <= T, got a={a}, b={b}")
    ts = grid.times
    tol = 1e-9 * grid.dt
    idx = np.flatnonzero((ts >= a - tol) & (ts <= b + tol))
    if idx.size < 2:
        return 0.0
    f = values[idx]
    t = ts[idx]
    best = 0.0
    # one lag at a time keeps memory O(N)
    for lag in range(1, idx.size):
        ratio = np.abs(f[lag:] - f[:-lag]) / (t[lag:] - t[:-lag]) ** alpha
        best = max(best, float(ratio.max()))
    return best
