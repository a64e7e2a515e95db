"""Bayesian bandwidth estimation for functional single index models.

The index is the FPC regression direction of a scalar response on a curve;
the link is estimated by Nadaraya-Watson smoothing, and the regression and
error-density bandwidths are sampled jointly with AR(p) error coefficients.
"""

from .error_model import ArParams, KernelErrorDensity, ar_filter, log_kernel_likelihood, simulate_ar
from .fda import CurveSet, FpcaBasis, fpca, inner_product, semimetric_deriv, semimetric_pca
from .forecast import PredictionInterval, empirical_coverage, error_cdf_quantile, prediction_interval
from .mcmc import ChainSummary, McmcConfig, PriorSpec, run_chain
from .model import FsimModel, NfrModel, fit_fsim, fit_nfr
from .regression import NwModel, SindexFit, estimate_index, nw_estimate
from .simulation import DgpConfig, ExperimentReport, gen_curves, gen_response, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ArParams",
    "ChainSummary",
    "CurveSet",
    "DgpConfig",
    "ExperimentReport",
    "FpcaBasis",
    "FsimModel",
    "KernelErrorDensity",
    "McmcConfig",
    "NfrModel",
    "NwModel",
    "PredictionInterval",
    "PriorSpec",
    "SindexFit",
    "ar_filter",
    "empirical_coverage",
    "error_cdf_quantile",
    "estimate_index",
    "fit_fsim",
    "fit_nfr",
    "fpca",
    "gen_curves",
    "gen_response",
    "inner_product",
    "log_kernel_likelihood",
    "nw_estimate",
    "prediction_interval",
    "run_chain",
    "run_experiment",
    "semimetric_deriv",
    "semimetric_pca",
    "simulate_ar",
]
