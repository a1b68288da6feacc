"""Method-of-moments estimation of multivariate models observed on ordered categories."""

from .datagen import DgpConfig, config_5c, config_8eq, generate, generate_5c
from .engine import ConvergenceError, FitOptions, FitResult, fit, first_stage
from .gauss import DegenerateProbabilityError, Interval, bvn_cdf, bvn_rect_prob, trunc_mean
from .latent import LatentCov, MatchOptions, full_correlation_matrix, match_rho, simulate_between_cov
from .model import Dataset, EquationSpec, ModelSpec, ParamSet, demean_regressors, validate
from .post import exact_data_se, mckelvey_zavoina_r2, pearson_coded, polychoric_matrix

__all__ = [
    "ConvergenceError",
    "Dataset",
    "DegenerateProbabilityError",
    "DgpConfig",
    "EquationSpec",
    "FitOptions",
    "FitResult",
    "Interval",
    "LatentCov",
    "MatchOptions",
    "ModelSpec",
    "ParamSet",
    "bvn_cdf",
    "bvn_rect_prob",
    "config_5c",
    "config_8eq",
    "demean_regressors",
    "exact_data_se",
    "first_stage",
    "fit",
    "full_correlation_matrix",
    "generate",
    "generate_5c",
    "match_rho",
    "mckelvey_zavoina_r2",
    "pearson_coded",
    "polychoric_matrix",
    "simulate_between_cov",
    "trunc_mean",
    "validate",
]
