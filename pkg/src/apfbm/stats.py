"""Monte-Carlo estimators for convergence in probability and in law.

The central estimator is the nested one,

    E[ | E^H[phi(X_N)] - phi(Xref) | ],

where ``E^H`` conditions on the fBm path: for each outer sample one driver
path is drawn, the reference is computed once on it, and the inner
expectation averages over independent fast-noise sequences replayed against
that same path.  Several step sizes are handled in one pass by simulating
on the finest grid and observing the same driver and the same Brownian
motion on coarser grids, so estimates at different ``dt`` are coupled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .averaging import DEFAULT_QUAD_ORDER, gauss_hermite, gaussian_expectation
from .fbm import TimeGrid, fbm_paths
from .noise import coarsen_gammas
from .schemes import SystemSpec, run_scheme
from .streams import make_rng

__all__ = [
    "TestFunction",
    "TEST_FUNCTIONS",
    "get_test_function",
    "ConvergenceReport",
    "NormalLaw",
    "prob_exceed",
    "rate_fit",
    "weak_error",
    "variance_with_se",
    "driver_path",
    "fast_gammas",
    "conditional_criterion",
    "conditional_criterion_curve",
    "coupled_terminals",
]


@dataclass(frozen=True)
class TestFunction:
    """A catalogued test function with its first two derivatives.

    ``bound`` is a bound on ``|phi|``, ``|phi'|`` and ``|phi''|`` (``inf`` for
    the identity, which lies outside the bounded class).
    """

    __test__ = False  # not a pytest class

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    bound: float

    def __call__(self, y):
        return self.f(y)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.bound)


def _sech2(y):
    return 1.0 / np.cosh(y) ** 2


TEST_FUNCTIONS = {
    "tanh": TestFunction("tanh", np.tanh, _sech2, lambda y: -2.0 * np.tanh(y) * _sech2(y), 1.0),
    "sin_scaled": TestFunction("sin_scaled", np.sin, np.cos, lambda y: -np.sin(y), 1.0),
    "gauss_bump": TestFunction(
        "gauss_bump",
        lambda y: np.exp(-y * y),
        lambda y: -2.0 * y * np.exp(-y * y),
        lambda y: (4.0 * y * y - 2.0) * np.exp(-y * y),
        2.0,
    ),
    "identity": TestFunction(
        "identity",
        lambda y: np.asarray(y, dtype=float) * 1.0,
        lambda y: np.ones_like(np.asarray(y, dtype=float)),
        lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        math.inf,
    ),
}


def get_test_function(name: str) -> TestFunction:
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown test function {name!r}; choose from {', '.join(TEST_FUNCTIONS)}"
        ) from None


@dataclass(frozen=True)
class NormalLaw:
    mean: float
    var: float


@dataclass(frozen=True)
class ConvergenceReport:
    axis: str
    grid: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    slope: float = float("nan")
    intercept: float = float("nan")
    r_squared: float = float("nan")

    def __post_init__(self):
        if self.axis not in ("dt", "epsilon"):
            raise ValueError(f"axis must be 'dt' or 'epsilon', got {self.axis!r}")
        grid = np.asarray(self.grid, dtype=float)
        if np.any(np.diff(grid) >= 0):
            raise ValueError("report grid must be strictly decreasing")
        if np.any(np.asarray(self.estimates) < 0):
            raise ValueError("error estimates must be non-negative")

    @classmethod
    def fitted(cls, axis, grid, estimates, std_errors):
        grid = np.asarray(grid, dtype=float)
        est = np.asarray(estimates, dtype=float)
        if len(grid) >= 3 and np.all(est > 0):
            slope, intercept, r2 = rate_fit(grid, est)
        else:
            slope = intercept = r2 = float("nan")
        return cls(axis, grid, est, np.asarray(std_errors, dtype=float), slope, intercept, r2)


def prob_exceed(a, b, eta: float) -> tuple[float, float]:
    """Frequency of ``|a - b| > eta`` with its binomial standard error."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("prob_exceed needs at least one pair")
    if a.shape != b.shape:
        raise ValueError("prob_exceed needs paired samples of equal length")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    p = float(np.mean(np.abs(a - b) > eta))
    return p, math.sqrt(p * (1.0 - p) / a.size)


def rate_fit(dts, errors) -> tuple[float, float, float]:
    """Least-squares line through ``(log dt, log error)``: slope, intercept, r^2."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dts.shape != errors.shape or dts.size < 3:
        raise ValueError("rate_fit needs at least 3 paired points")
    if np.any(dts <= 0) or np.any(errors <= 0):
        raise ValueError("rate_fit needs strictly positive step sizes and errors")
    lx, ly = np.log(dts), np.log(errors)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def variance_with_se(sample) -> tuple[float, float]:
    """Unbiased sample variance and its large-sample standard error."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    c = x - x.mean()
    var = float(c @ c / (n - 1))
    m4 = float(np.mean(c**4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / n)


def weak_error(ensemble, reference, phi: TestFunction,
               quad_order: int = DEFAULT_QUAD_ORDER) -> tuple[float, float]:
    """``|mean phi(ensemble) - E phi(reference)|`` with a pooled standard error.

    ``reference`` is either a second ensemble or a :class:`NormalLaw`, whose
    expectation is computed by Gauss-Hermite quadrature (no sampling error).
    """
    a = np.asarray(ensemble, dtype=float).ravel()
    if a.size < 30:
        raise ValueError("weak_error needs at least 30 samples")
    fa = phi(a)
    var = fa.var(ddof=1) / a.size
    if isinstance(reference, NormalLaw):
        if reference.var < 0:
            raise ValueError("reference variance must be non-negative")
        ref = float(gaussian_expectation(phi, reference.mean, math.sqrt(reference.var), quad_order))
    else:
        b = np.asarray(reference, dtype=float).ravel()
        if b.size < 30:
            raise ValueError("weak_error needs at least 30 reference samples")
        fb = phi(b)
        ref = float(fb.mean())
        var += fb.var(ddof=1) / b.size
    return abs(float(fa.mean()) - ref), math.sqrt(var)


# --- coupled simulation -------------------------------------------------------


def driver_path(spec: SystemSpec, grid: TimeGrid, seed: int, index: int) -> np.ndarray:
    """Driver values ``beta(t_n)`` of outer sample ``index``, shape ``(N + 1,)``."""
    rng = make_rng(seed, "driver", index)
    if spec.driver == "brownian":
        out = np.zeros(grid.N + 1)
        out[1:] = np.cumsum(rng.standard_normal(grid.N)) * math.sqrt(grid.dt)
        return out
    return fbm_paths(grid, spec.h, rng, 1)[0]


def fast_gammas(seed: int, index: int, inner: int | None, N: int) -> np.ndarray:
    """Gamma sequences of outer sample ``index``: ``(N,)`` or ``(inner, N)``."""
    shape = (N,) if inner is None else (inner, N)
    return make_rng(seed, "gamma", index).standard_normal(shape)


# Gauss-Hermite order for the control's conditional means; the node error for
# smooth g is far below the Monte-Carlo noise, and this is the hot loop.
CONTROL_QUAD_ORDER = 16


def _conditional_mean_g(spec: SystemSpec, kind: str, dt: float, x, m_prev, chunk: int = 1 << 18):
    """``E[g(x, m_next) | x, m_prev]`` for the fast update used by ``kind``."""
    ou = spec.ou
    if kind == "implicit_nonap":
        if ou.is_limit:
            return spec.g(x, np.zeros_like(m_prev))
        r = dt / ou.epsilon
        loc, scale = m_prev / (1.0 + r), math.sqrt(r) / (1.0 + r)
    elif kind.endswith("limiting") or ou.is_limit:
        loc, scale = None, 1.0
    else:
        a = math.exp(-dt / ou.epsilon)
        loc, scale = a * m_prev, math.sqrt(-math.expm1(-2.0 * dt / ou.epsilon))
        if a < 1e-12:
            loc = None
    if loc is None and spec.g.x_independent:
        nodes, weights = gauss_hermite(spec.quad_order)
        return np.full(np.shape(x), float(spec.g(0.0, nodes) @ weights))
    nodes, weights = gauss_hermite(CONTROL_QUAD_ORDER)
    if loc is None:
        loc = np.zeros_like(m_prev)
    x, loc = np.broadcast_arrays(np.asarray(x, float), np.asarray(loc, float))
    flat_x, flat_loc = x.ravel(), loc.ravel()
    out = np.empty(flat_x.size)
    step = max(1, chunk // nodes.size)
    for s in range(0, flat_x.size, step):
        sl = slice(s, s + step)
        out[sl] = spec.g(flat_x[sl, None], flat_loc[sl, None] + scale * nodes) @ weights
    return out.reshape(x.shape)


def _martingale_control(spec: SystemSpec, traj, dbeta, gammas) -> np.ndarray:
    """``sum_k (g(X_k, m_{k+1}) - E[g(X_k, m_{k+1}) | past]) dbeta_k``.

    Its conditional mean given the driver is exactly zero, so subtracting a
    driver-measurable multiple of it leaves the inner expectation unchanged.
    """
    if spec.g.is_constant:
        return np.zeros(np.broadcast_shapes(traj.states.shape[:-1], np.shape(dbeta)[:-1]))
    x_prev = traj.states[..., :-1]
    if traj.fast_states is None:
        m_next = gammas
        m_prev = np.zeros_like(gammas)
    else:
        m_next = traj.fast_states[..., 1:]
        m_prev = traj.fast_states[..., :-1]
    dt = traj.grid.dt
    mart = spec.g(x_prev, m_next) - _conditional_mean_g(spec, traj.scheme_kind, dt, x_prev, m_prev)
    return mart @ dbeta


def _check_grids(Ns: Sequence[int], reference_N: int | None) -> int:
    Ns = [int(n) for n in Ns]
    n_max = max(Ns + ([reference_N] if reference_N else []))
    for n in Ns + ([reference_N] if reference_N else []):
        if n < 1 or n_max % n:
            raise ValueError(f"step counts must divide the finest one ({n_max}); got {n}")
    return n_max


def _one_outer(spec, phi, T, Ns, n_max, inner, seed, index, kind, reference_N, control_variate):
    fine = TimeGrid(T, n_max)
    values = driver_path(spec, fine, seed, index)
    gam_fine = fast_gammas(seed, index, inner, n_max)
    out = np.empty(len(Ns))
    ref_cache = {}
    for j, N in enumerate(Ns):
        stride = n_max // N
        grid = TimeGrid(T, N)
        dbeta = np.diff(values[::stride])
        gam = coarsen_gammas(gam_fine, stride)
        traj = run_scheme(spec, grid, dbeta, gam, kind)
        rN = reference_N or N
        if rN not in ref_cache:
            rstride = n_max // rN
            ref = run_scheme(spec, TimeGrid(T, rN), np.diff(values[::rstride]), None, "averaged")
            ref_cache[rN] = float(ref.terminal)
        ref = ref_cache[rN]
        # centring on phi(ref) first keeps pathwise-exact cases exactly zero
        samples = phi(traj.terminal) - phi(ref)
        if control_variate:
            samples = samples - phi.d1(ref) * _martingale_control(spec, traj, dbeta, gam)
        out[j] = abs(float(np.mean(samples)))
    return out


def conditional_criterion_curve(
    spec: SystemSpec,
    phi: TestFunction,
    T: float,
    Ns: Sequence[int],
    outer: int,
    inner: int,
    seed: int,
    kind: str = "limiting",
    reference_N: int | None = None,
    control_variate: bool = True,
    threads: int = 1,
) -> ConvergenceReport:
    """Nested estimate of ``E|E^H[phi(X_N)] - phi(Xref_N)|`` for each step count.

    The reference is the averaged Euler scheme on the same grid, or on
    ``reference_N`` steps when given.  With ``control_variate`` the inner
    samples are ``phi(X_N) - phi'(Xref) * C`` where ``C`` is the zero-mean
    martingale part of ``X_N``; this removes most of the inner sampling
    noise without biasing the inner expectation.  Sample ``i`` always uses
    substreams tagged with ``i``, so the result does not depend on
    ``threads``.
    """
    if outer < 30:
        raise ValueError(f"need outer >= 30, got {outer}")
    if inner < 100:
        raise ValueError(f"need inner >= 100, got {inner}")
    Ns = sorted({int(n) for n in Ns})
    n_max = _check_grids(Ns, reference_N)
    spec.resolve_kind(kind)

    def work(indices):
        return [_one_outer(spec, phi, T, Ns, n_max, inner, seed, i, kind, reference_N, control_variate)
                for i in indices]

    chunks = [range(s, min(s + 8, outer)) for s in range(0, outer, 8)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    diffs = np.array([row for part in parts for row in part])  # (outer, len(Ns))
    est = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(outer)
    dts = T / np.array(Ns, dtype=float)
    return ConvergenceReport.fitted("dt", dts, est, se)


def conditional_criterion(spec: SystemSpec, phi: TestFunction, grid: TimeGrid, outer: int, inner: int,
                          seed: int, **kwargs) -> tuple[float, float]:
    rep = conditional_criterion_curve(spec, phi, grid.T, [grid.N], outer, inner, seed, **kwargs)
    return float(rep.estimates[0]), float(rep.std_errors[0])


def coupled_terminals(spec: SystemSpec, T: float, N: int, n_max: int, samples: int, seed: int,
                      kinds: Sequence[str]) -> dict:
    """Terminal values of several schemes on shared noise, one per sample.

    Sample ``i`` uses driver path ``i`` (on the ``n_max`` grid, observed
    every ``n_max // N`` points) and gamma sequence ``i``.  Returns a dict
    ``kind -> array(samples)`` plus ``"beta_T"``.
    """
    stride = n_max // N
    if n_max % N:
        raise ValueError(f"N={N} must divide n_max={n_max}")
    fine = TimeGrid(T, n_max)
    grid = TimeGrid(T, N)
    drivers = np.array([driver_path(spec, fine, seed, i)[::stride] for i in range(samples)])
    gammas = np.array([coarsen_gammas(fast_gammas(seed, i, None, n_max), stride)
                       for i in range(samples)])
    dbeta = np.diff(drivers, axis=1)
    out = {"beta_T": drivers[:, -1]}
    for kind in kinds:
        out[kind] = run_scheme(spec, grid, dbeta, gammas, kind).terminal
    return out
