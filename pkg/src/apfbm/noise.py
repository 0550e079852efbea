"""Fast Ornstein-Uhlenbeck component and Brownian drivers.

The OU process ``dm = -m/eps dt + sqrt(2/eps) dB`` has invariant law N(0, 1)
and is stepped exactly in distribution.  ``epsilon == 0`` is a flag for the
limiting regime where the updated state is the fresh Gaussian itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbm import TimeGrid
from .streams import make_rng

__all__ = [
    "OuParams",
    "ou_step",
    "ou_marginal",
    "brownian_increments",
    "gaussian_seq",
    "coarsen_gammas",
]


@dataclass(frozen=True)
class OuParams:
    epsilon: float
    m0: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in [0, 1] (0 flags the limit), got {self.epsilon}")

    @property
    def is_limit(self) -> bool:
        return self.epsilon == 0.0


def ou_step(m, params: OuParams, dt: float, gamma):
    """One exact OU step ``m' = e^{-dt/eps} m + sqrt(1 - e^{-2dt/eps}) gamma``.

    Broadcasts over array arguments.
    """
    if params.is_limit:
        return gamma
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    # exp underflows to 0 for dt/eps > ~745, which is the right limit
    decay = np.exp(-dt / params.epsilon)
    return decay * m + np.sqrt(-np.expm1(-2.0 * dt / params.epsilon)) * gamma


def ou_marginal(params: OuParams, t: float) -> tuple[float, float]:
    """Mean and variance of m(t) started from ``params.m0``."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if params.is_limit:
        raise ValueError("ou_marginal needs epsilon > 0")
    mean = np.exp(-t / params.epsilon) * params.m0
    var = -np.expm1(-2.0 * t / params.epsilon)
    return float(mean), float(var)


def brownian_increments(grid: TimeGrid, rng: np.random.Generator, n_paths: int | None = None) -> np.ndarray:
    """I.i.d. N(0, dt) increments, shape ``(N,)`` or ``(n_paths, N)``."""
    shape = (grid.N,) if n_paths is None else (n_paths, grid.N)
    return rng.standard_normal(shape) * np.sqrt(grid.dt)


def gaussian_seq(grid: TimeGrid, seed: int, *tags, n_paths: int | None = None) -> np.ndarray:
    """The standardised Brownian increments ``gamma_n`` of the fast noise.

    Replaying the same ``(seed, *tags)`` yields bit-identical output.
    """
    rng = make_rng(seed, "gamma", *tags)
    shape = (grid.N,) if n_paths is None else (n_paths, grid.N)
    return rng.standard_normal(shape)


def coarsen_gammas(gammas: np.ndarray, factor: int) -> np.ndarray:
    """Standardised increments of the same Brownian path on a grid ``factor`` times coarser."""
    gammas = np.asarray(gammas)
    N = gammas.shape[-1]
    if N % factor:
        raise ValueError(f"cannot coarsen {N} steps by {factor}")
    if factor == 1:
        return gammas
    blocks = gammas.reshape(gammas.shape[:-1] + (N // factor, factor))
    return blocks.sum(axis=-1) / np.sqrt(factor)
