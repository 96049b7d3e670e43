"""Large deviations of stretched-exponential sums and the maxima they condition.

Modules
-------
model       law, moments, truncated cumulant generating function, tilt solver
ratefn      single-jump landscape, thresholds s0 < s1 < s2, rate function f_s
exactlaw    exact laws of sums and maxima by log-domain convolution
montecarlo  tilted importance sampling with batch error bars
zrp         zero-range process simulation and stationarity checks
cli         command-line front end
"""

from .exceptions import (
    ConfigurationError,
    DomainError,
    InvariantViolation,
    NoSolutionError,
    ResourceError,
)
from .model import ModelParams, TruncatedCgf, derive_params, solve_tilt
from .ratefn import f_table, f_value, gap_set, inf_F, s2, thresholds
from .exactlaw import ldp_slope_max, ldp_slope_sum, log_sum_prob, sum_law
from .montecarlo import build_sampler, estimate_conditioned, mc_max_histogram
from .zrp import ZrpConfig, condensation_time, run, stationary_check

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "InvariantViolation",
    "NoSolutionError",
    "ResourceError",
    "ModelParams",
    "TruncatedCgf",
    "derive_params",
    "solve_tilt",
    "thresholds",
    "s2",
    "inf_F",
    "f_value",
    "f_table",
    "gap_set",
    "sum_law",
    "log_sum_prob",
    "ldp_slope_sum",
    "ldp_slope_max",
    "build_sampler",
    "estimate_conditioned",
    "mc_max_histogram",
    "ZrpConfig",
    "run",
    "stationary_check",
    "condensation_time",
]
