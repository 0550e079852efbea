"""Experiment drivers behind the CLI subcommands.

Each experiment turns an :class:`ExperimentConfig` into result tables with
fixed column sets (see ``COLUMNS``).  Everything random is drawn from
substreams of ``config.base_seed``, so output is reproducible.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from .averaging import averaged_g2_sqrt
from .config import ExperimentConfig, ResultTable, write_table
from .fbm import FbmPath, TimeGrid
from .noise import OuParams
from .schemes import SystemSpec, run_scheme, variation_sups
from .stats import (
    NormalLaw,
    conditional_criterion_curve,
    coupled_terminals,
    driver_path,
    fast_gammas,
    get_test_function,
    prob_exceed,
    variance_with_se,
    weak_error,
)

__all__ = ["COLUMNS", "run_experiment", "build_spec"]

COLUMNS = {
    "simulate": ["n", "t", "beta", "m", "X_ap", "X_limiting", "X_averaged"],
    "rate-fit": ["dt", "error", "std_error"],
    "ap-diagram": ["epsilon", "dt", "error", "std_error", "order_tag"],
    "eps-sweep": ["epsilon", "terminal_gap_mean", "terminal_gap_se"],
    "brownian-compare": [
        "dt", "var_limiting", "var_limiting_se", "var_target", "ks_pvalue",
        "p_exceed", "p_exceed_se", "weak_error", "weak_error_se",
    ],
    "variation-diag": ["dt", "n", "sup_eta", "sup_zeta"],
}


def build_spec(cfg: ExperimentConfig, epsilon: float | None = None) -> SystemSpec:
    eps = cfg.epsilon[0] if epsilon is None else epsilon
    return SystemSpec(cfg.expr, cfg.h, OuParams(eps, cfg.m0), cfg.x0, cfg.driver, cfg.quad_order)


def _finest(cfg) -> int:
    n_max = max(cfg.N)
    bad = [n for n in cfg.N if n_max % n]
    if bad:
        raise ValueError(f"grid.N: every step count must divide {n_max}; offending {bad}")
    return n_max


def _decreasing_dts(cfg):
    return sorted(set(cfg.N))


def simulate(cfg: ExperimentConfig, threads: int = 1) -> list:
    N = cfg.N[0]
    grid = TimeGrid(cfg.T, N)
    spec = build_spec(cfg)
    values = driver_path(spec, grid, cfg.base_seed, 0)
    gam = fast_gammas(cfg.base_seed, 0, None, N)
    drv = FbmPath(grid, spec.h, values) if spec.driver == "fractional" else np.diff(values)
    ap = run_scheme(spec, grid, drv, gam, "ap")
    lim = run_scheme(spec, grid, drv, gam, "limiting")
    avg = run_scheme(spec, grid, drv, None, "averaged")
    ts = grid.times
    rows = [
        [n, ts[n], values[n], ap.fast_states[n], ap.states[n], lim.states[n], avg.states[n]]
        for n in range(N + 1)
    ]
    return [ResultTable("simulate", COLUMNS["simulate"], rows, {"epsilon": format(spec.ou.epsilon, ".17g")})]


def rate_fit_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    spec = build_spec(cfg, 0.0)
    phi = get_test_function(cfg.phi)
    rep = conditional_criterion_curve(spec, phi, cfg.T, cfg.N, cfg.outer, cfg.inner, cfg.base_seed,
                                      kind="limiting", control_variate=cfg.control_variate,
                                      threads=threads)
    rows = [[float(d), float(e), float(s)] for d, e, s in zip(rep.grid, rep.estimates, rep.std_errors)]
    footer = {"slope": rep.slope, "intercept": rep.intercept, "r2": rep.r_squared}
    return [ResultTable("rate_fit", COLUMNS["rate-fit"], rows, {"phi": phi.name}, footer)]


def ap_diagram(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Both iterated limits of ``E|E^H[phi(X_N^eps)] - phi(Xbar(T))|``.

    ``eps_first``: epsilon -> 0 taken first (the limiting scheme), then the
    step size decreases.  ``dt_first``: the finest step size stands in for
    dt -> 0, then epsilon decreases.  The reference is the averaged Euler
    scheme on the finest grid, which is exact when g does not depend on x.
    """
    n_max = _finest(cfg)
    phi = get_test_function(cfg.phi)
    common = dict(outer=cfg.outer, inner=cfg.inner, seed=cfg.base_seed, reference_N=n_max,
                  control_variate=cfg.control_variate, threads=threads)
    rows = []
    lim = conditional_criterion_curve(build_spec(cfg, 0.0), phi, cfg.T, cfg.N, kind="limiting", **common)
    for dt, e, s in zip(lim.grid, lim.estimates, lim.std_errors):
        rows.append([0.0, float(dt), float(e), float(s), "eps_first"])
    for eps in sorted({e for e in cfg.epsilon if e > 0}, reverse=True):
        rep = conditional_criterion_curve(build_spec(cfg, eps), phi, cfg.T, [n_max], kind="ap", **common)
        rows.append([eps, cfg.T / n_max, float(rep.estimates[0]), float(rep.std_errors[0]), "dt_first"])
    return [ResultTable("ap_diagram", COLUMNS["ap-diagram"], rows, {"phi": phi.name})]


def eps_sweep(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Mean coupled terminal gap ``|X_N^eps - X_N^0|`` for each epsilon."""
    N = _finest(cfg)
    rows = []
    lim = coupled_terminals(build_spec(cfg, 0.0), cfg.T, N, N, cfg.outer, cfg.base_seed, ["limiting"])
    for eps in sorted(set(cfg.epsilon), reverse=True):
        ap = coupled_terminals(build_spec(cfg, eps), cfg.T, N, N, cfg.outer, cfg.base_seed, ["ap"])
        gap = np.abs(ap["ap"] - lim["limiting"])
        rows.append([eps, float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(gap.size))])
    return [ResultTable("eps_sweep", COLUMNS["eps-sweep"], rows)]


def brownian_compare(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Limiting scheme versus the averaged equation for a standard Brownian driver.

    Per step size: variance of ``X_N^0`` against ``T * E[g^2]``, a KS test
    against the averaged law, the coupled exceedance probability at the
    largest ``eta``, and the weak error for ``phi``.  The closed-form
    targets apply when g does not depend on x; otherwise they are ``nan``
    and the weak error uses the averaged-scheme ensemble.
    """
    if cfg.driver != "brownian":
        raise ValueError("brownian-compare needs system.driver = brownian")
    spec = build_spec(cfg, 0.0)
    n_max = _finest(cfg)
    phi = get_test_function(cfg.phi)
    eta = max(cfg.eta)
    closed = cfg.expr.x_independent
    g2 = averaged_g2_sqrt(cfg.expr, 0.0, cfg.quad_order) ** 2 if closed else float("nan")
    rows = []
    for N in _decreasing_dts(cfg):
        out = coupled_terminals(spec, cfg.T, N, n_max, cfg.outer, cfg.base_seed,
                                ["brownian_limiting", "brownian_averaged"])
        xl, xa = out["brownian_limiting"], out["brownian_averaged"]
        var, var_se = variance_with_se(xl)
        p, p_se = prob_exceed(xl, xa, eta)
        if closed:
            target = g2 * cfg.T
            ks = float(sps.kstest(xl, "norm", args=(cfg.x0, math.sqrt(target))).pvalue)
            werr, werr_se = weak_error(xl, NormalLaw(cfg.x0, target), phi)
        else:
            target, ks = float("nan"), float("nan")
            werr, werr_se = weak_error(xl, xa, phi)
        rows.append([cfg.T / N, var, var_se, target, ks, p, p_se, werr, werr_se])
    meta = {"phi": phi.name, "eta": format(eta, ".17g")}
    return [ResultTable("brownian_compare", COLUMNS["brownian-compare"], rows, meta)]


def variation_diag(cfg: ExperimentConfig, threads: int = 1) -> list:
    """``sup_x |eta_{n,N}(x)|`` and ``sup_x |zeta_{n,N}(x)|`` per step size and start index.

    Suprema are also taken over ``mc.outer`` driver paths; each path is
    sampled once on the finest grid and observed on the coarser ones.
    """
    spec = build_spec(cfg, 0.0)
    n_max = _finest(cfg)
    gbar = spec.gbar
    paths = [driver_path(spec, TimeGrid(cfg.T, n_max), cfg.base_seed, i) for i in range(cfg.outer)]
    rows = []
    for N in _decreasing_dts(cfg):
        stride = n_max // N
        se = np.zeros(N + 1)
        sz = np.zeros(N + 1)
        for values in paths:
            e, z = variation_sups(gbar, np.diff(values[::stride]), cfg.x_grid, cfg.fd_step)
            se = np.maximum(se, e)
            sz = np.maximum(sz, z)
        rows.extend([cfg.T / N, n, float(se[n]), float(sz[n])] for n in range(N + 1))
    return [ResultTable("variation_diag", COLUMNS["variation-diag"], rows)]


_RUNNERS = {
    "simulate": simulate,
    "rate-fit": rate_fit_experiment,
    "ap-diagram": ap_diagram,
    "eps-sweep": eps_sweep,
    "brownian-compare": brownian_compare,
    "variation-diag": variation_diag,
}


def run_experiment(cfg: ExperimentConfig, experiment: str | None = None, out_dir=None,
                   threads: int = 1) -> list[Path]:
    """Run one experiment and write its tables; returns the written paths."""
    experiment = experiment or cfg.experiment
    if experiment is None:
        raise ValueError("no experiment given")
    if cfg.experiment is not None and cfg.experiment != experiment:
        raise ValueError(f"config is for experiment {cfg.experiment!r}, not {experiment!r}")
    try:
        runner = _RUNNERS[experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {experiment!r}") from None
    tables = runner(cfg, threads=threads)
    meta = {
        "apfbm_version": __version__,
        "experiment": experiment,
        "seed": str(cfg.base_seed),
        "config_sha256": cfg.digest(),
    }
    out = Path(out_dir if out_dir is not None else cfg.output)
    paths = []
    for t in tables:
        t.metadata = {**meta, **t.metadata}
        paths.append(write_table(t, out))
    return paths
