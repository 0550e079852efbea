"""Discrete-time recursions for the slow-fast system ``dX = g(X, m) dbeta``.

All steppers broadcast, so a batch of Monte-Carlo samples is advanced by
passing arrays.  Comparison runs must share one driver and one gamma
sequence; :func:`run_scheme` never draws random numbers itself.

Scheme kinds
------------
``ap``              exact OU step, then ``X += g(X, m_{n+1}) dbeta``
``limiting``        ``X += g(X, gamma_n) dbeta``  (epsilon -> 0 of ``ap``)
``averaged``        ``X += gbar(X) dbeta``, Euler for the averaged equation
``implicit_nonap``  implicit-Euler OU step instead of the exact one
``brownian_*``      the same recursions with a standard Brownian driver;
                    ``brownian_averaged`` uses ``sqrt(E[g^2])``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .averaging import DEFAULT_QUAD_ORDER, AveragedCoeff
from .coeffexpr import CoeffExpr, ExprEvalError
from .fbm import FbmPath, TimeGrid, check_hurst
from .noise import OuParams, ou_step

__all__ = [
    "SystemSpec",
    "SchemeTrajectory",
    "SchemeStepError",
    "VariationState",
    "SCHEME_KINDS",
    "step_ap",
    "step_limiting",
    "step_averaged",
    "step_implicit_nonap",
    "run_scheme",
    "variation_recursion",
    "variation_sups",
]

SCHEME_KINDS = (
    "ap",
    "limiting",
    "averaged",
    "implicit_nonap",
    "brownian_ap",
    "brownian_limiting",
    "brownian_averaged",
)
_WITH_FAST = {"ap", "implicit_nonap", "brownian_ap"}


class SchemeStepError(ArithmeticError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"scheme failed at step {step}: {cause}")


@dataclass(frozen=True)
class SystemSpec:
    g: CoeffExpr
    h: float
    ou: OuParams
    x0: float = 0.0
    driver: str = "fractional"
    quad_order: int = DEFAULT_QUAD_ORDER

    def __post_init__(self):
        if self.driver == "fractional":
            check_hurst(self.h, strict=True)
        elif self.driver == "brownian":
            if self.h != 0.5:
                raise ValueError(f"the brownian driver needs h = 0.5, got {self.h}")
        else:
            raise ValueError(f"driver must be 'fractional' or 'brownian', got {self.driver!r}")

    @property
    def gbar(self) -> AveragedCoeff:
        kind = "mean_g" if self.driver == "fractional" else "sqrt_mean_g2"
        return AveragedCoeff(self.g, kind, self.quad_order)

    def with_epsilon(self, epsilon: float) -> "SystemSpec":
        return SystemSpec(self.g, self.h, OuParams(epsilon, self.ou.m0), self.x0, self.driver,
                          self.quad_order)

    def resolve_kind(self, kind: str) -> str:
        """Map a generic kind to the driver-specific one (``ap`` -> ``brownian_ap``)."""
        if kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {kind!r}")
        if self.driver == "brownian":
            if kind == "implicit_nonap":
                return kind
            return kind if kind.startswith("brownian_") else "brownian_" + kind
        if kind.startswith("brownian_"):
            raise ValueError(f"scheme {kind!r} needs a brownian driver")
        return kind


@dataclass(frozen=True)
class SchemeTrajectory:
    """States of one run; arrays carry a leading sample axis for batched runs."""

    grid: TimeGrid
    states: np.ndarray
    scheme_kind: str
    fast_states: np.ndarray | None = None

    @property
    def terminal(self):
        return self.states[..., -1]


def step_ap(x, m, spec: SystemSpec, dt: float, gamma, dbeta):
    m_new = ou_step(m, spec.ou, dt, gamma)
    return x + spec.g(x, m_new) * dbeta, m_new


def step_limiting(x, spec: SystemSpec, gamma, dbeta):
    return x + spec.g(x, gamma) * dbeta


def step_averaged(x, gbar: AveragedCoeff, dbeta):
    return x + gbar(x) * dbeta


def _implicit_ou(m, ou: OuParams, dt: float, gamma):
    if ou.is_limit:
        return np.zeros(np.broadcast_shapes(np.shape(m), np.shape(gamma)))[()]
    r = dt / ou.epsilon
    return (m + np.sqrt(r) * gamma) / (1.0 + r)


def step_implicit_nonap(x, m, spec: SystemSpec, dt: float, gamma, dbeta):
    m_new = _implicit_ou(m, spec.ou, dt, gamma)
    return x + spec.g(x, m_new) * dbeta, m_new


def _as_increments(driver) -> np.ndarray:
    if isinstance(driver, FbmPath):
        return np.asarray(driver.increments)
    return np.asarray(driver, dtype=float)


def run_scheme(spec: SystemSpec, grid: TimeGrid, driver, gammas, kind: str) -> SchemeTrajectory:
    """Run one scheme over the whole grid.

    ``driver`` is an :class:`FbmPath` or an array of increments (``(N,)`` or
    ``(M, N)``); ``gammas`` likewise (``None`` is allowed for the averaged
    kinds, which do not use them).
    """
    kind = spec.resolve_kind(kind)
    dbeta = _as_increments(driver)
    N = grid.N
    if dbeta.shape[-1] != N:
        raise ValueError(f"driver has {dbeta.shape[-1]} increments, grid has {N} steps")
    averaged = kind.endswith("averaged")
    if gammas is None:
        if not averaged:
            raise ValueError(f"scheme {kind!r} needs a gamma sequence")
        gammas = np.zeros(N)
    gammas = np.asarray(gammas, dtype=float)
    if gammas.shape[-1] != N:
        raise ValueError(f"gamma sequence has {gammas.shape[-1]} entries, grid has {N} steps")

    batch = np.broadcast_shapes(dbeta.shape[:-1], () if averaged else gammas.shape[:-1])
    states = np.empty(batch + (N + 1,))
    states[..., 0] = spec.x0
    fast = None
    if kind in _WITH_FAST:
        fast = np.empty(batch + (N + 1,))
        fast[..., 0] = spec.ou.m0

    # constant coefficient: X_n = x0 + c * beta(t_n) in closed form, bit-exact
    const = None
    if spec.g.is_constant:
        const = spec.g(0.0, 0.0)
    elif averaged and spec.g.x_independent:
        const = spec.gbar(0.0)
    if const is not None:
        if isinstance(driver, FbmPath):
            path = np.asarray(driver.values)
        else:
            path = np.concatenate([np.zeros(dbeta.shape[:-1] + (1,)), np.cumsum(dbeta, axis=-1)], axis=-1)
        states[...] = spec.x0 + const * path
        if fast is None:
            return SchemeTrajectory(grid, states, kind, None)

    x = states[..., 0].copy()
    m = None if fast is None else fast[..., 0].copy()
    dt = grid.dt
    gbar = spec.gbar
    for n in range(N):
        db = dbeta[..., n]
        ga = gammas[..., n]
        try:
            if const is not None:
                m = (ou_step(m, spec.ou, dt, ga) if kind != "implicit_nonap"
                     else _implicit_ou(m, spec.ou, dt, ga))
            elif kind in ("ap", "brownian_ap"):
                x, m = step_ap(x, m, spec, dt, ga, db)
            elif kind in ("limiting", "brownian_limiting"):
                x = step_limiting(x, spec, ga, db)
            elif kind == "implicit_nonap":
                x, m = step_implicit_nonap(x, m, spec, dt, ga, db)
            else:
                x = step_averaged(x, gbar, db)
        except ExprEvalError as exc:
            raise SchemeStepError(n, exc) from exc
        if const is None:
            states[..., n + 1] = x
        if fast is not None:
            fast[..., n + 1] = m
    return SchemeTrajectory(grid, states, kind, fast)


@dataclass(frozen=True)
class VariationState:
    """Flow ``xbar_{n,k}(x)`` and its first/second ``x``-derivatives ``eta``, ``zeta``.

    Arrays are indexed by ``k - n`` along the first axis.
    """

    n: int
    xbar: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray


def variation_recursion(gbar: AveragedCoeff, fbm, n: int, x, fd_step: float = 1e-4) -> VariationState:
    """Averaged Euler flow started at ``x`` at step ``n`` with its variation processes.

    ``eta_{n,k+1} = eta_{n,k} (1 + gbar'(xbar_{n,k}) dbeta_k)`` and
    ``zeta_{n,k+1} = zeta_{n,k} (1 + gbar' dbeta_k) + gbar''(xbar_{n,k}) eta_{n,k}^2 dbeta_k``,
    the exact derivatives of the discrete flow map.  ``gbar'`` and
    ``gbar''`` are central differences.
    """
    dbeta = _as_increments(fbm)
    N = dbeta.shape[-1]
    if not 0 <= n <= N:
        raise ValueError(f"start index {n} outside [0, {N}]")
    x = np.asarray(x, dtype=float)
    K = N - n
    xbar = np.empty((K + 1,) + x.shape)
    eta = np.empty_like(xbar)
    zeta = np.empty_like(xbar)
    xbar[0], eta[0], zeta[0] = x, 1.0, 0.0
    for j in range(K):
        db = dbeta[n + j]
        g0, g1, g2 = gbar.derivatives(xbar[j], fd_step)
        xbar[j + 1] = xbar[j] + g0 * db
        eta[j + 1] = eta[j] + g1 * eta[j] * db
        zeta[j + 1] = zeta[j] + g1 * zeta[j] * db + g2 * eta[j] ** 2 * db
    return VariationState(n, xbar, eta, zeta)


def variation_sups(gbar: AveragedCoeff, fbm, x_grid, fd_step: float = 1e-4):
    """``max_x |eta_{n,N}(x)|`` and ``max_x |zeta_{n,N}(x)|`` for every start index n.

    All start indices are advanced together; row ``n`` joins at step ``n``.
    """
    dbeta = _as_increments(fbm)
    N = dbeta.shape[-1]
    x_grid = np.asarray(x_grid, dtype=float)
    xbar = np.broadcast_to(x_grid, (N + 1, x_grid.size)).copy()
    eta = np.ones_like(xbar)
    zeta = np.zeros_like(xbar)
    for k in range(N):
        a = slice(0, k + 1)  # rows n <= k are active
        db = dbeta[k]
        g0, g1, g2 = gbar.derivatives(xbar[a], fd_step)
        zeta[a] = zeta[a] + g1 * zeta[a] * db + g2 * eta[a] ** 2 * db
        eta[a] = eta[a] + g1 * eta[a] * db
        xbar[a] = xbar[a] + g0 * db
    return np.abs(eta).max(axis=1), np.abs(zeta).max(axis=1)
