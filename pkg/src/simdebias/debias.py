"""Debiased estimators of single coordinates of beta = mu * tau.

The sample of ``2n`` rows is split in two.  Nuisance quantities (the lasso
pilot, node-wise regressions, Hermite coefficients) come from the second half
and the one-step correction is summed over the first half, so that the
correction term is a sum of conditionally independent terms.
"""

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from ._validation import as_design, as_generator, as_response, as_vector, check_coordinate, check_level
from .design import CovarianceModel, population_gamma
from .exceptions import DegenerateDenominatorError, IllConditionedError, InputError, ZeroPilotError
from .hermite import (
    ESTIMATED_SIGMA,
    KNOWN_SIGMA,
    HermiteCoeffs,
    estimate_coeffs,
    hermite_eval_all,
    link_estimate,
)
from .lasso import lasso_cv, lasso_fit, tune_nodewise_lambda

DENOM_FLOOR = 1e-8
MAX_CONDITION = 1e8
PILOT_FLOOR = 1e-10

KNOWN = "KnownSigma"
NODEWISE = "NodewiseSigma"
CROSSFIT = "CrossfitAverage"


def hermite_method(m, sigma_source):
    prefix = "HermiteKnown" if sigma_source == KNOWN_SIGMA else "HermiteEstimated"
    return f"{prefix}({m})"


@dataclass(frozen=True)
class SplitPlan:
    """Row indices of the two sub-samples.

    ``s21``/``s22`` are the first ``floor(|s2|/2)`` and the remaining rows of
    ``s2``; they are used by the Hermite estimator (pilot on ``s21``,
    expansion coefficients on ``s22``).
    """

    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        s1 = np.asarray(self.s1, dtype=np.intp)
        s2 = np.asarray(self.s2, dtype=np.intp)
        if s1.ndim != 1 or s2.ndim != 1 or s1.size < 1 or s2.size < 1:
            raise InputError("both sub-samples must be non-empty index vectors")
        if np.intersect1d(s1, s2).size:
            raise InputError("sub-samples overlap")
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)

    @classmethod
    def halves(cls, n_total):
        """First ``floor(N/2)`` rows versus the remaining ``ceil(N/2)``."""
        if n_total < 2:
            raise InputError(f"need at least 2 rows to split, got {n_total}")
        n1 = n_total // 2
        return cls(np.arange(n1), np.arange(n1, n_total))

    @property
    def s21(self):
        return self.s2[: self.s2.size // 2]

    @property
    def s22(self):
        return self.s2[self.s2.size // 2 :]

    @property
    def n_total(self):
        return self.s1.size + self.s2.size

    def swapped(self):
        return SplitPlan(self.s2, self.s1)

    def drop(self, rows):
        """Plan with `rows` removed from whichever sub-sample holds them."""
        rows = np.asarray(rows, dtype=np.intp)
        return SplitPlan(self.s1[~np.isin(self.s1, rows)], self.s2[~np.isin(self.s2, rows)])


@dataclass(frozen=True)
class Dataset:
    """A design, its responses and the split used by the estimators."""

    X: np.ndarray
    y: np.ndarray
    plan: SplitPlan = None

    def __post_init__(self):
        X = as_design(self.X, min_rows=2)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", as_response(self.y, X.shape[0]))
        if self.plan is None:
            object.__setattr__(self, "plan", SplitPlan.halves(X.shape[0]))

    @property
    def n1(self):
        return self.plan.s1.size

    def part(self, name):
        idx = getattr(self.plan, name)
        return _take_rows(self.X, idx), self.y[idx]

    def without(self, rows):
        return Dataset(self.X, self.y, self.plan.drop(rows))


def _take_rows(X, idx):
    # contiguous index ranges become views
    if idx.size and idx[-1] - idx[0] + 1 == idx.size and np.all(np.diff(idx) == 1):
        return X[idx[0] : idx[-1] + 1]
    return X[idx]


@dataclass(frozen=True)
class DebiasEstimate:
    k: int
    beta_tilde: float
    se: float
    ci: tuple
    level: float
    method: str
    denominator: float
    degree: int = None

    @property
    def length(self):
        return self.ci[1] - self.ci[0]

    def covers(self, value):
        return self.ci[0] <= value <= self.ci[1]

    def excludes_zero(self):
        return not self.covers(0.0)


@dataclass(frozen=True)
class MultiDebiasEstimate:
    K: np.ndarray
    beta_tilde: np.ndarray
    covariance: np.ndarray
    level: float = 0.95

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def intervals(self):
        half = _quantile(self.level) * self.se
        return np.column_stack([self.beta_tilde - half, self.beta_tilde + half])


def _quantile(level):
    return NormalDist().inv_cdf(0.5 + 0.5 * check_level(level))


def confidence_interval(beta_tilde, se, level=0.95):
    """Two-sided normal interval ``beta_tilde +/- z * se``."""
    half = _quantile(level) * float(se)
    return (float(beta_tilde) - half, float(beta_tilde) + half)


def _check_denominator(denom, n, k):
    if not abs(denom) >= DENOM_FLOOR * n:
        raise DegenerateDenominatorError(k, denom, n)


def variance_estimate(resid_r, resid_z, X1, k):
    """Plug-in standard error ``sqrt(sum z_i^2 r_i^2) / |sum r_i x_ik|``."""
    X1 = as_design(X1)
    n = X1.shape[0]
    if n < 2:
        raise InputError("variance_estimate needs at least 2 rows")
    r = as_vector(resid_r, n, name="resid_r")
    z = as_vector(resid_z, n, name="resid_z")
    k = check_coordinate(k, X1.shape[1])
    denom = float(r @ X1[:, k])
    _check_denominator(denom, n, k)
    return math.sqrt(float(np.sum((z * r) ** 2))) / abs(denom)


def residuals_known(X1, gamma, k):
    """``r_i = x_ik - <gamma, x_{i,-k}>``."""
    X1 = as_design(X1, min_cols=2)
    p = X1.shape[1]
    k = check_coordinate(k, p)
    gamma = as_vector(gamma, p - 1, name="gamma")
    return X1[:, k] - X1 @ np.insert(gamma, k, 0.0)


def residuals_estimated(X1, gamma_hat, k):
    """Same as :func:`residuals_known` with a fitted ``gamma_hat``."""
    return residuals_known(X1, gamma_hat, k)


def _one_step(X1, y1, r, fitted, base, k, level, method, degree=None):
    n = X1.shape[0]
    resid = y1 - fitted
    denom = float(r @ X1[:, k])
    _check_denominator(denom, n, k)
    beta_tilde = float(base) + float(r @ resid) / denom
    se = math.sqrt(float(np.sum((resid * r) ** 2))) / abs(denom)
    level = check_level(level)
    return DebiasEstimate(k, beta_tilde, se, confidence_interval(beta_tilde, se, level), level, method, denom, degree)


def _inputs(X1, y1, r, beta_hat, k):
    X1 = as_design(X1, min_rows=2)
    n, p = X1.shape
    return (
        X1,
        as_response(y1, n, name="y1"),
        as_vector(r, n, name="r"),
        as_vector(beta_hat, p, name="beta_hat"),
        check_coordinate(k, p),
    )


def debias_known(X1, y1, r, beta_hat, k, level=0.95):
    """One-step correction of ``beta_hat[k]`` with residuals `r`.

    ``beta_tilde = beta_hat[k] + sum r_i (y_i - <x_i, beta_hat>) / sum r_i x_ik``.
    `beta_hat` must come from rows disjoint from `X1`.
    """
    X1, y1, r, beta_hat, k = _inputs(X1, y1, r, beta_hat, k)
    return _one_step(X1, y1, r, X1 @ beta_hat, beta_hat[k], k, level, KNOWN)


def debias_unknown(X1, y1, gamma_hat, beta_hat, k, level=0.95):
    """Debiasing with node-wise residuals ``x_k - X_{-k} gamma_hat``."""
    X1 = as_design(X1, min_rows=2, min_cols=2)
    r = residuals_estimated(X1, gamma_hat, k)
    X1, y1, r, beta_hat, k = _inputs(X1, y1, r, beta_hat, k)
    return _one_step(X1, y1, r, X1 @ beta_hat, beta_hat[k], k, level, NODEWISE)


def debias_multivariate(X1, y1, R_hat, beta_hat, K, level=0.95):
    """Joint correction of ``beta_hat[K]``.

    ``beta_tilde = beta_hat[K] + (R'X_K)^{-1} R'(y - X beta_hat)``, with
    covariance ``A^{-1} Theta A^{-T} / n`` where ``A = R'X_K / n`` and
    ``Theta = mean(z_i^2 R_i R_i')``.
    """
    X1 = as_design(X1, min_rows=2)
    n, p = X1.shape
    y1 = as_response(y1, n, name="y1")
    beta_hat = as_vector(beta_hat, p, name="beta_hat")
    K = np.atleast_1d(np.asarray(K))
    if K.ndim != 1 or K.size < 1:
        raise InputError("K must be a non-empty list of coordinates")
    K = np.array([check_coordinate(k, p, name="K") for k in K.tolist()])
    if np.unique(K).size != K.size:
        raise InputError("K has repeated coordinates")
    R = np.asarray(R_hat, dtype=np.float64).reshape(n, -1)
    if R.shape[1] != K.size:
        raise InputError(f"R_hat has {R.shape[1]} columns but |K| = {K.size}")
    z = y1 - X1 @ beta_hat
    M = R.T @ X1[:, K]
    A = M / n
    cond = np.linalg.cond(A)
    if not cond <= MAX_CONDITION:
        raise IllConditionedError(cond)
    beta_tilde = beta_hat[K] + np.linalg.solve(M, R.T @ z)
    Rz = R * z[:, None]
    theta = Rz.T @ Rz / n
    A_inv = np.linalg.inv(A)
    cov = A_inv @ theta @ A_inv.T / n
    cov = 0.5 * (cov + cov.T)
    return MultiDebiasEstimate(K, beta_tilde, cov, check_level(level))


def pilot_direction(beta_hat, sigma=None, *, sample=None):
    """Pilot slope ``mu1 = ||Sigma^{1/2} beta_hat||`` and direction ``beta_hat / mu1``.

    Parameters
    ----------
    beta_hat : array_like, shape (p,)
    sigma : CovarianceModel or array_like, optional
        Known (or externally estimated) covariance.
    sample : array_like, shape (m, p), optional
        Rows used for ``Sigma_hat = X'X / m`` when `sigma` is not given.  Only
        the quadratic form ``||X beta_hat||^2 / m`` is formed.

    Returns
    -------
    mu1 : float
    tau_hat : ndarray
    """
    beta_hat = np.asarray(beta_hat, dtype=np.float64).ravel()
    if (sigma is None) == (sample is None):
        raise InputError("give exactly one of sigma or sample")
    if sample is not None:
        S = as_design(sample, name="sample")
        if S.shape[1] != beta_hat.size:
            raise InputError(f"sample has {S.shape[1]} columns but beta_hat has length {beta_hat.size}")
        sup = np.flatnonzero(beta_hat)
        fitted = S[:, sup] @ beta_hat[sup]
        quad = float(fitted @ fitted) / S.shape[0]
    elif isinstance(sigma, CovarianceModel):
        if sigma.p != beta_hat.size:
            raise InputError(f"covariance has dimension {sigma.p} but beta_hat has length {beta_hat.size}")
        quad = sigma.quad_form(beta_hat)
    else:
        S = np.asarray(sigma, dtype=np.float64)
        if S.shape != (beta_hat.size, beta_hat.size):
            raise InputError(f"sigma must be {beta_hat.size} x {beta_hat.size}, got {S.shape}")
        sup = np.flatnonzero(beta_hat)
        quad = float(beta_hat[sup] @ S[np.ix_(sup, sup)] @ beta_hat[sup])
    mu1 = math.sqrt(max(quad, 0.0))
    if not mu1 >= PILOT_FLOOR:
        raise ZeroPilotError(mu1)
    return mu1, beta_hat / mu1


def debias_efficient(X1, y1, r, beta_hat, coeffs, k, level=0.95):
    """Correction with the degree-m link estimate in place of the linear fit.

    ``beta_tilde = beta_hat[k] + sum r_i (y_i - g_m(<x_i, tau_hat>)) / sum r_i x_ik``;
    the standard error uses the residuals ``y_i - g_m(<x_i, tau_hat>)``.
    """
    X1, y1, r, beta_hat, k = _inputs(X1, y1, r, beta_hat, k)
    if not isinstance(coeffs, HermiteCoeffs):
        raise InputError("coeffs must be a HermiteCoeffs instance")
    if coeffs.tau_hat.shape != beta_hat.shape:
        raise InputError("coeffs.tau_hat and beta_hat have different lengths")
    fitted = link_estimate(coeffs, X1 @ coeffs.tau_hat)
    method = hermite_method(coeffs.degree, coeffs.mu1_source)
    return _one_step(X1, y1, r, fitted, beta_hat[k], k, level, method, coeffs.degree)


def crossfit_average(est_a, est_b):
    """Average two estimates computed with the sub-sample roles swapped.

    The halves are treated as independent: ``se = sqrt(se_a^2 + se_b^2) / 2``.
    """
    if est_a.k != est_b.k:
        raise InputError(f"cannot average estimates of different coordinates ({est_a.k} and {est_b.k})")
    if est_a.level != est_b.level:
        raise InputError("cannot average estimates at different confidence levels")
    beta = 0.5 * (est_a.beta_tilde + est_b.beta_tilde)
    se = 0.5 * math.hypot(est_a.se, est_b.se)
    degree = est_a.degree if est_a.degree == est_b.degree else None
    return DebiasEstimate(
        est_a.k, beta, se, confidence_interval(beta, se, est_a.level), est_a.level,
        CROSSFIT, est_a.denominator + est_b.denominator, degree,
    )


# ---------------------------------------------------------------------------
# split pipelines


@dataclass
class Pilot:
    """Lasso pilot with its penalty and (when tuned here) the CV record."""

    beta_hat: np.ndarray
    lam: float
    cv: object = None

    @property
    def support(self):
        return np.flatnonzero(self.beta_hat)


def fit_pilot(X, y, *, lam=None, rng=None, n_folds=10):
    """Ten-fold CV lasso, or a single fit when `lam` is fixed."""
    if lam is not None:
        return Pilot(lasso_fit(X, y, lam).coefficients, float(lam))
    cv = lasso_cv(X, y, n_folds=n_folds, rng=rng)
    return Pilot(cv.fit_at_star.coefficients, cv.lambda_star, cv)


@dataclass
class Residualizer:
    """Residual maker for the first sub-sample.

    With a known covariance the population regression is used; otherwise the
    node-wise lasso is tuned on `X2` and the fitted penalties are kept in
    ``lambdas``.
    """

    cov: CovarianceModel = None
    X2: np.ndarray = None
    lambdas: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.cov is None) == (self.X2 is None):
            raise InputError("Residualizer needs exactly one of cov or X2")

    @property
    def known(self):
        return self.cov is not None

    def gamma(self, k):
        if self.known:
            return population_gamma(self.cov, k)[0]
        tuning = tune_nodewise_lambda(self.X2, k)
        self.lambdas[k] = tuning.lam
        return tuning.gamma

    def residuals(self, X1, k):
        return residuals_known(X1, self.gamma(k), k)


def debias_split(data, targets, *, cov=None, pilot=None, level=0.95, rng=None):
    """Linear debiasing of each coordinate in `targets` on ``data.plan``.

    The pilot and (for unknown covariance) the node-wise regressions are fit
    on ``s2``; the correction is summed over ``s1``.

    Returns
    -------
    estimates : list of DebiasEstimate
    pilot : Pilot
    """
    X1, y1 = data.part("s1")
    X2, y2 = data.part("s2")
    if pilot is None:
        pilot = fit_pilot(X2, y2, rng=rng)
    res = Residualizer(cov=cov) if cov is not None else Residualizer(X2=X2)
    fitted = X1 @ pilot.beta_hat
    method = KNOWN if res.known else NODEWISE
    out = []
    for k in targets:
        k = check_coordinate(k, data.X.shape[1])
        r = res.residuals(X1, k)
        out.append(_one_step(X1, y1, r, fitted, pilot.beta_hat[k], k, level, method))
    return out, pilot


@dataclass
class HermiteState:
    """Everything the efficient estimator needs besides the first sub-sample."""

    pilot: Pilot
    coeffs: HermiteCoeffs
    gamma: np.ndarray
    k: int


def prepare_hermite(data, k, max_degree, *, cov=None, pilot=None, rng=None):
    """Pilot on ``s21``, expansion coefficients on ``s22``, residual regression.

    With `cov` the pilot slope uses the population covariance and the
    residuals use the population regression; otherwise ``Sigma_hat`` comes from
    ``s2`` and the node-wise lasso is tuned on ``s2``.
    """
    k = check_coordinate(k, data.X.shape[1])
    X21, y21 = data.part("s21")
    X22, y22 = data.part("s22")
    if pilot is None:
        pilot = fit_pilot(X21, y21, rng=rng)
    if cov is not None:
        mu1, tau_hat = pilot_direction(pilot.beta_hat, cov)
        gamma = population_gamma(cov, k)[0]
        source = KNOWN_SIGMA
    else:
        X2, _ = data.part("s2")
        mu1, tau_hat = pilot_direction(pilot.beta_hat, sample=X2)
        gamma = tune_nodewise_lambda(X2, k).gamma
        source = ESTIMATED_SIGMA
    coeffs = estimate_coeffs(X22, y22, tau_hat, mu1, max_degree, mu1_source=source)
    return HermiteState(pilot, coeffs, gamma, k)


def hermite_estimates(data, state, degrees, level=0.95):
    """Efficient estimates on ``data.plan.s1`` for each degree in `degrees`."""
    X1, y1 = data.part("s1")
    k = state.k
    r = residuals_known(X1, state.gamma, k)
    H = hermite_eval_all(state.coeffs.degree, X1 @ state.coeffs.tau_hat)
    mu = state.coeffs.mu
    out = []
    for m in degrees:
        if not 1 <= m <= state.coeffs.degree:
            raise InputError(f"degree {m} outside 1..{state.coeffs.degree}")
        fitted = H[:, : m + 1] @ mu[: m + 1]
        method = hermite_method(m, state.coeffs.mu1_source)
        out.append(_one_step(X1, y1, r, fitted, state.pilot.beta_hat[k], k, level, method, m))
    return out


def infer(data, targets, *, cov=None, degree=None, crossfit=False, level=0.95, rng=None):
    """Debiased estimates for `targets` on a :class:`Dataset`.

    ``degree=None`` gives the linear estimator (pilot on ``s2``); an integer
    gives the efficient estimator of that degree (pilot on ``s21``).  With
    `crossfit` the sub-sample roles are swapped and the two estimates averaged.
    """
    rng = as_generator(rng)
    targets = [check_coordinate(k, data.X.shape[1], name="target") for k in targets]

    def one(d):
        if degree is None:
            return debias_split(d, targets, cov=cov, level=level, rng=rng)[0]
        X21, y21 = d.part("s21")
        pilot = fit_pilot(X21, y21, rng=rng)
        out = []
        for k in targets:
            state = prepare_hermite(d, k, degree, cov=cov, pilot=pilot)
            out.extend(hermite_estimates(d, state, [degree], level))
        return out

    first = one(data)
    if not crossfit:
        return first
    second = one(Dataset(data.X, data.y, data.plan.swapped()))
    return [crossfit_average(a, b) for a, b in zip(first, second)]
