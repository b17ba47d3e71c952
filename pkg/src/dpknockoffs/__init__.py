"""Differentially private Model-X knockoff selection via JLT sketches."""

from .debias import debias, eta, rho_n
from .filter import StatisticFamily, knockoff_threshold, run_filter
from .knockoff import augment, sample_knockoffs
from .model import DesignDistribution, ModelSpec, NoiseSpec
from .privacy import PrivacyBudget, compute_w, gaussian_privatize_moments, jlt_privatize
from .solver import SolverConfig, default_lambda, lasso_data, lasso_gram

__version__ = "0.1.0"

__all__ = [
    "DesignDistribution", "ModelSpec", "NoiseSpec", "PrivacyBudget", "SolverConfig",
    "StatisticFamily", "augment", "compute_w", "debias", "default_lambda", "eta",
    "gaussian_privatize_moments", "jlt_privatize", "knockoff_threshold", "lasso_data",
    "lasso_gram", "rho_n", "run_filter", "sample_knockoffs",
]
