"""Estimate and compare the expected log predictive density of Bayesian
logistic-regression models with exact, K-fold, importance-sampling,
Pareto-smoothed and subsampled leave-one-out cross-validation."""

__version__ = "0.1.0"

from .errors import (
    ApproxLooError,
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    GpdFitError,
    NonFiniteError,
)
from .model import (
    Dataset,
    ModelSpec,
    ParamVector,
    log_likelihood_matrix,
    log_likelihood_pointwise,
    log_posterior_unnormalized,
    log_prior,
)
from .inference import (
    ConvergenceReport,
    LaplaceApproximation,
    McmcConfig,
    PosteriorDraws,
    gelman_rubin,
    laplace_approximate,
    laplace_log_density,
    sample_from_laplace,
    sample_posterior_mcmc,
)
from .psis import (
    KHAT_THRESHOLD,
    SmoothedWeights,
    corrected_importance_log_ratios,
    fit_generalized_pareto,
    smooth_weights,
)
from .estimators import (
    ComparisonRow,
    ElpdReport,
    PointwiseLogLik,
    compare_models,
    dic,
    dic_from_draws,
    elpd_is_loo,
    elpd_kfold,
    elpd_loo_exact,
    elpd_psis_loo,
    psis_loo_pointwise,
    waic,
)
from .subsampling import (
    SubsamplePlan,
    compute_pps_probabilities,
    draw_subsample,
    elpd_psis_loo_subsampled,
    sigma_loo_sq_subsampled,
    subsampled_elpd,
    subsampling_variance,
)
from .ppc import LooPitResult, ReferenceBands, loo_pit, uniform_reference_bands
from .io import RunConfig, emit_reports, ingest_csv, load_config, parse_config
from .pipeline import PipelineError, ReportBundle, run_pipeline
