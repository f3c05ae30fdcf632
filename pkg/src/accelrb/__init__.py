"""Bayesian and least-squares estimation for interleaved randomized benchmarking."""

__version__ = "0.1.0"

from .errors import AccelRBError, ConfigError, DomainError, SamplingError
from .model import Datum, ExperimentDesign, Mode, ModelParams, PriorSpec, log_likelihood, survival_probability
from .smc import SmcConfig, run_smc
from .lsf import fit_zeroth_order, lsf_interleaved_estimate
from .fisher import bcrb, crb, fisher_information, fisher_score, optimal_m

__all__ = [
    "AccelRBError", "ConfigError", "DomainError", "SamplingError",
    "Datum", "ExperimentDesign", "Mode", "ModelParams", "PriorSpec", "log_likelihood", "survival_probability",
    "SmcConfig", "run_smc", "fit_zeroth_order", "lsf_interleaved_estimate",
    "bcrb", "crb", "fisher_information", "fisher_score", "optimal_m",
]
