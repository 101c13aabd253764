"""Debiased inference for sparse single-index models."""

__version__ = "0.1.0"

from .debias import (
    Dataset,
    DebiasEstimate,
    MultiDebiasEstimate,
    SplitPlan,
    confidence_interval,
    crossfit_average,
    debias_efficient,
    debias_known,
    debias_multivariate,
    debias_unknown,
    infer,
    pilot_direction,
    residuals_estimated,
    residuals_known,
    variance_estimate,
)
from .design import (
    CovarianceModel,
    DesignSpec,
    IndexVector,
    LinkModel,
    RadialLaw,
    make_tau,
    population_gamma,
    population_mu,
    sample_elliptical,
    sample_gaussian,
)
from .estimators import DebiasedSingleIndex, LassoCD, LassoCVCD, NodewiseResidualizer
from .hermite import HermiteCoeffs, default_degree, estimate_coeffs, gauss_hermite_rule, hermite_eval
from .jackknife import JackknifePlan, jackknife_variance, select_degree
from .lasso import lasso_cv, lasso_fit, nodewise_lasso, tune_nodewise_lambda
from .simulation import (
    ExperimentConfig,
    MetricsTable,
    compute_metrics,
    run_coverage_experiment,
    run_hermite_experiment,
    run_mse_curve,
)
