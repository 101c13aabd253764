"""scikit-learn style wrappers around the functional API."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .debias import Dataset, SplitPlan, infer, residuals_known
from .design import CovarianceModel
from .exceptions import InputError
from .lasso import lasso_cv, lasso_fit, nodewise_lasso, tune_nodewise_lambda


def _check_features(est, X):
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != est.n_features_in_:
        raise InputError(f"X has {X.shape[1]} features, but {type(est).__name__} was fit with {est.n_features_in_}")
    return X


def _as_covariance(sigma, p):
    if sigma is None or isinstance(sigma, CovarianceModel):
        cov = sigma
    else:
        cov = CovarianceModel.explicit(sigma)
    if cov is not None and cov.p != p:
        raise InputError(f"covariance has dimension {cov.p} but X has {p} columns")
    return cov


class LassoCD(RegressorMixin, BaseEstimator):
    """Lasso without intercept, ``(1/2n)||y - Xb||^2 + alpha ||b||_1``.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_iter_ : int
        Coordinate-descent sweeps used.
    kkt_violation_ : float
    converged_ : bool
    """

    def __init__(self, alpha=1.0, tol=None, max_sweeps=100_000):
        self.alpha = alpha
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        fit = lasso_fit(X, y, self.alpha, tol=self.tol, max_sweeps=self.max_sweeps)
        self.coef_ = fit.coefficients
        self.n_iter_ = fit.iterations
        self.kkt_violation_ = fit.max_kkt_violation
        self.converged_ = fit.converged
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return _check_features(self, X) @ self.coef_


class LassoCVCD(RegressorMixin, BaseEstimator):
    """K-fold cross-validated :class:`LassoCD` (minimum-error penalty)."""

    def __init__(self, n_folds=10, grid_size=100, ratio=1e-3, random_state=None):
        self.n_folds = n_folds
        self.grid_size = grid_size
        self.ratio = ratio
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        cv = lasso_cv(X, y, self.n_folds, self.grid_size, self.random_state, ratio=self.ratio)
        self.alpha_ = cv.lambda_star
        self.alphas_ = cv.lambda_grid
        self.cv_errors_ = cv.cv_errors
        self.coef_ = cv.fit_at_star.coefficients
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return _check_features(self, X) @ self.coef_


class NodewiseResidualizer(TransformerMixin, BaseEstimator):
    """Residual of column `target` after a lasso regression on the other columns.

    With ``alpha=None`` the penalty is chosen by the node-wise score rule
    (largest grid penalty with ``max_j |X_j' r| / ||r|| < sqrt(log p)``).
    ``transform`` returns the residuals as a single column.
    """

    def __init__(self, target=0, alpha=None):
        self.target = target
        self.alpha = alpha

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.alpha is None:
            tuning = tune_nodewise_lambda(X, self.target)
            self.alpha_, self.gamma_, self.satisfied_ = tuning.lam, tuning.gamma, tuning.satisfied
        else:
            self.alpha_ = float(self.alpha)
            self.gamma_ = nodewise_lasso(X, self.target, self.alpha_)
            self.satisfied_ = None
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "gamma_")
        X = _check_features(self, X)
        return residuals_known(X, self.gamma_, self.target)[:, None]


class DebiasedSingleIndex(BaseEstimator):
    """Debiased inference on coordinates of ``beta = mu * tau`` in a single-index model.

    The rows are split into two halves (first ``floor(n/2)`` rows, the rest).
    The lasso pilot and the node-wise regressions come from the second half and
    the correction is summed over the first.

    Parameters
    ----------
    targets : sequence of int
        0-based coordinates to estimate.
    sigma : CovarianceModel or array_like, optional
        Known design covariance.  When omitted, node-wise lasso residuals are used.
    degree : int, optional
        Use the Hermite-expansion estimator of this degree instead of the
        linear correction.
    crossfit : bool
        Also run with the halves swapped and average.
    level : float
        Confidence level of ``conf_int_``.
    random_state : int, Generator or None
        Seeds the cross-validation folds of the pilot.

    Attributes
    ----------
    coef_ : ndarray of shape (n_targets,)
    stderr_ : ndarray of shape (n_targets,)
    conf_int_ : ndarray of shape (n_targets, 2)
    estimates_ : list of DebiasEstimate
    """

    def __init__(self, targets=(0,), sigma=None, degree=None, crossfit=False, level=0.95, random_state=None):
        self.targets = targets
        self.sigma = sigma
        self.degree = degree
        self.crossfit = crossfit
        self.level = level
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] < 2:
            raise InputError("need at least 2 columns")
        cov = _as_covariance(self.sigma, X.shape[1])
        data = Dataset(X, y, SplitPlan.halves(X.shape[0]))
        ests = infer(
            data, list(self.targets), cov=cov, degree=self.degree, crossfit=self.crossfit,
            level=self.level, rng=self.random_state,
        )
        self.estimates_ = ests
        self.coef_ = np.array([e.beta_tilde for e in ests])
        self.stderr_ = np.array([e.se for e in ests])
        self.conf_int_ = np.array([e.ci for e in ests])
        self.n_features_in_ = X.shape[1]
        return self

    def summary(self):
        """One dict per target: coordinate, estimate, se, interval and method."""
        check_is_fitted(self, "estimates_")
        return [
            {"k": e.k, "estimate": e.beta_tilde, "se": e.se, "ci_lo": e.ci[0], "ci_hi": e.ci[1], "method": e.method}
            for e in self.estimates_
        ]
