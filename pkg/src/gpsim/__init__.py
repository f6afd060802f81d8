"""Gaussian-process single-index models for emulating computer experiments."""

from .kernels import KernelSpec, SingularMatrixError, build_corr_matrix, corr
from .mcmc import Chain, MCMCConfig, adapt_proposal, effective_sample_size, run_chain
from .posterior import GammaMixture, MVNPrior, PriorSpec, SymmetricGamma, log_posterior
from .postprocess import point_estimate, reconcile
from .predict import joint_predictive, mixture_moments, mixture_predict, predictive

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "GammaMixture",
    "KernelSpec",
    "MCMCConfig",
    "MVNPrior",
    "PriorSpec",
    "SingularMatrixError",
    "SymmetricGamma",
    "adapt_proposal",
    "build_corr_matrix",
    "corr",
    "effective_sample_size",
    "joint_predictive",
    "log_posterior",
    "mixture_moments",
    "mixture_predict",
    "point_estimate",
    "predictive",
    "reconcile",
    "run_chain",
]
