"""Asymptotic-preserving Euler schemes for slow-fast SDEs driven by fractional Brownian motion."""

__version__ = "0.1.0"

from .averaging import AveragedCoeff, averaged_g, averaged_g2_sqrt, gauss_hermite, mc_average
from .coeffexpr import CoeffExpr, parse
from .fbm import FbmPath, TimeGrid, fbm_covariance, holder_seminorm, sample_fbm_cholesky, sample_fbm_circulant
from .noise import OuParams, brownian_increments, ou_marginal, ou_step
from .schemes import SystemSpec, run_scheme, variation_recursion
from .streams import make_rng

__all__ = [
    "AveragedCoeff",
    "CoeffExpr",
    "FbmPath",
    "OuParams",
    "SystemSpec",
    "TimeGrid",
    "averaged_g",
    "averaged_g2_sqrt",
    "brownian_increments",
    "fbm_covariance",
    "gauss_hermite",
    "holder_seminorm",
    "make_rng",
    "mc_average",
    "ou_marginal",
    "ou_step",
    "parse",
    "run_scheme",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "variation_recursion",
]
