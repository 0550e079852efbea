"""Averages of ``g(x, m)`` against the invariant law N(0, 1) of the fast process."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coeffexpr import CoeffExpr

__all__ = [
    "gauss_hermite",
    "gaussian_expectation",
    "averaged_g",
    "averaged_g2_sqrt",
    "mc_average",
    "AveragedCoeff",
    "DEFAULT_QUAD_ORDER",
]

DEFAULT_QUAD_ORDER = 40


def _orthonormal_hermite(n: int, x: np.ndarray) -> np.ndarray:
    """Rows p_0..p_n of the probabilists' Hermite polynomials, orthonormal under N(0,1)."""
    p = np.empty((n + 1,) + np.shape(x))
    p[0] = 1.0
    if n >= 1:
        p[1] = x
    for k in range(1, n):
        p[k + 1] = (x * p[k] - np.sqrt(k) * p[k - 1]) / np.sqrt(k + 1)
    return p


@lru_cache(maxsize=None)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum(w * f(x)) ~ E[f(Z)]``, ``Z ~ N(0, 1)``.

    Nodes are eigenvalues of the Jacobi matrix (Golub-Welsch), polished by
    Newton steps on the orthonormal recurrence; weights are
    ``1 / sum_k p_k(x_i)^2`` which avoids the eigenvector precision loss
    for tiny tail weights.
    """
    order = int(order)
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    off = np.sqrt(np.arange(1, order))
    jac = np.diag(off, 1) + np.diag(off, -1)
    x = np.linalg.eigvalsh(jac)
    for _ in range(3):
        p = _orthonormal_hermite(order, x)
        # d/dx p_n = sqrt(n) p_{n-1} for the orthonormal family
        x = x - p[order] / (np.sqrt(order) * p[order - 1])
    p = _orthonormal_hermite(order - 1, x)
    w = 1.0 / np.sum(p * p, axis=0)
    w /= w.sum()
    x = 0.5 * (x - x[::-1])  # exact symmetry
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gaussian_expectation(f, mean=0.0, std=1.0, quad_order: int = DEFAULT_QUAD_ORDER):
    """``E[f(mean + std * Z)]`` by Gauss-Hermite; ``f`` must broadcast."""
    nodes, weights = gauss_hermite(quad_order)
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    vals = f(mean[..., None] + std[..., None] * nodes)
    return vals @ weights


def _node_values(expr: CoeffExpr, x, quad_order: int):
    nodes, weights = gauss_hermite(quad_order)
    x = np.asarray(x, dtype=float)
    return expr(x[..., None], nodes), weights


def averaged_g(expr: CoeffExpr, x, quad_order: int = DEFAULT_QUAD_ORDER):
    """``gbar(x) = E[g(x, m)]`` with ``m ~ N(0, 1)``; vectorised over ``x``."""
    vals, weights = _node_values(expr, x, quad_order)
    out = vals @ weights
    return float(out) if np.ndim(out) == 0 else out


def averaged_g2_sqrt(expr: CoeffExpr, x, quad_order: int = DEFAULT_QUAD_ORDER):
    """``sqrt(E[g(x, m)^2])``, the Brownian-driver averaged coefficient."""
    vals, weights = _node_values(expr, x, quad_order)
    mean_sq = (vals * vals) @ weights
    if np.any(mean_sq < 0):
        raise ArithmeticError("negative quadrature value for E[g^2]")
    out = np.sqrt(mean_sq)
    return float(out) if np.ndim(out) == 0 else out


def mc_average(expr: CoeffExpr, x: float, power: int, samples: int,
               rng: np.random.Generator) -> tuple[float, float]:
    """Plain Monte-Carlo ``E[g(x, m)^power]`` with its standard error."""
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    vals = expr(float(x), rng.standard_normal(samples)) ** power
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


@dataclass(frozen=True)
class AveragedCoeff:
    """Averaged coefficient as a callable of ``x``.

    ``kind`` is ``"mean_g"`` (fractional driver) or ``"sqrt_mean_g2"``
    (Brownian driver).
    """

    source: CoeffExpr
    kind: str = "mean_g"
    quad_order: int = DEFAULT_QUAD_ORDER

    def __post_init__(self):
        if self.kind not in ("mean_g", "sqrt_mean_g2"):
            raise ValueError(f"unknown averaged coefficient kind {self.kind!r}")
        if self.quad_order < 2:
            raise ValueError(f"quad_order must be >= 2, got {self.quad_order}")

    def __call__(self, x):
        if self.kind == "mean_g":
            return averaged_g(self.source, x, self.quad_order)
        return averaged_g2_sqrt(self.source, x, self.quad_order)

    @property
    def x_independent(self) -> bool:
        return self.source.x_independent

    def derivatives(self, x, fd_step: float = 1e-4):
        """Value, first and second derivative by central differences.

        The step is ``fd_step * (1 + |x|)``.
        """
        x = np.asarray(x, dtype=float)
        if self.x_independent:
            v = np.broadcast_to(self(0.0), x.shape) * np.ones_like(x)
            return v, np.zeros_like(x), np.zeros_like(x)
        step = fd_step * (1.0 + np.abs(x))
        vals = self(np.stack([x - step, x, x + step]))
        lo, mid, hi = vals[0], vals[1], vals[2]
        return mid, (hi - lo) / (2 * step), (hi - 2 * mid + lo) / (step * step)
