"""l1-penalized Huber regression for sparse linear models with heavy-tailed covariates."""

__version__ = "0.1.0"

from .huber import Dataset, ObjectiveValue, PenaltyConfig, gradient_smooth, huber_loss, huber_score, objective
from .solver import FitResult, SolverOptions, fit, kkt_residual, lipschitz_upper_bound, soft_threshold
from .tuning import (
    ProblemShape,
    TheoryConstants,
    check_theorem_conditions,
    lambda_grid_cv,
    lambda_o_theory,
    lambda_s_theory,
    radii_theory,
    rate_delta,
    rate_ds,
)
from .datagen import CovariateFamily, NoiseFamily, ScenarioSpec, sample_instance

__all__ = [
    "CovariateFamily", "Dataset", "FitResult", "NoiseFamily", "ObjectiveValue", "PenaltyConfig",
    "ProblemShape", "ScenarioSpec", "SolverOptions", "TheoryConstants", "check_theorem_conditions",
    "fit", "gradient_smooth", "huber_loss", "huber_score", "kkt_residual", "lambda_grid_cv",
    "lambda_o_theory", "lambda_s_theory", "lipschitz_upper_bound", "objective", "radii_theory",
    "rate_delta", "rate_ds", "sample_instance", "soft_threshold",
]
