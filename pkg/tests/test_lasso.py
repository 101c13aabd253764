import math
import warnings

import numpy as np
import pytest

from simdebias.design import CovarianceModel, LinkModel, generate_responses, make_tau, sample_gaussian
from simdebias.exceptions import InputError, TuningWarning
from simdebias.lasso import (
    kkt_tolerance,
    lambda_grid,
    lambda_max,
    lasso_cv,
    lasso_fit,
    lasso_path,
    nodewise_lasso,
    tune_nodewise_lambda,
)


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def kkt_violation(X, y, beta, lam):
    g = X.T @ (y - X @ beta) / X.shape[0]
    active = beta != 0
    return float(np.max(np.where(active, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))))


def objective(X, y, beta, lam):
    r = y - X @ beta
    return r @ r / (2 * X.shape[0]) + lam * np.abs(beta).sum()


def sparse_problem(rng, n, p, s=5, noise=1.0):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:s] = rng.uniform(1, 2, s) * rng.choice([-1, 1], s)
    return X, X @ beta + noise * rng.standard_normal(n), beta


# lasso_fit


def test_zero_at_lambda_max(rng):
    X, y, _ = sparse_problem(rng, 40, 60)
    fit = lasso_fit(X, y, lambda_max(X, y))
    np.testing.assert_array_equal(fit.coefficients, 0.0)
    assert fit.converged


def test_orthonormal_closed_form(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    X = Q * math.sqrt(5)  # X'X / n = I
    y = rng.standard_normal(5)
    lam = 0.2
    fit = lasso_fit(X, y, lam)
    np.testing.assert_allclose(fit.coefficients, soft_threshold(X.T @ y / 5, lam), atol=1e-8)


def test_small_lambda_matches_least_squares(rng):
    X = rng.standard_normal((80, 6))
    y = X @ rng.standard_normal(6) + rng.standard_normal(80)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    fit = lasso_fit(X, y, 1e-9)
    assert np.max(np.abs(fit.coefficients - ols)) <= 1e-5


def test_rejects_bad_inputs(rng):
    X = rng.standard_normal((10, 3))
    y = rng.standard_normal(10)
    with pytest.raises(InputError):
        lasso_fit(X, y, 0.0)
    bad = X.copy()
    bad[2, 1] = np.nan
    with pytest.raises(InputError):
        lasso_fit(bad, y, 0.1)
    with pytest.raises(InputError):
        lasso_fit(X, np.append(y[:-1], np.inf), 0.1)


def test_kkt_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(10, 201))
        p = int(rng.integers(1, 201))
        X, y, _ = sparse_problem(rng, n, p, s=min(5, p))
        lam = lambda_max(X, y) * rng.uniform(0.01, 0.9)
        fit = lasso_fit(X, y, lam)
        assert fit.converged
        tol = kkt_tolerance(X, y)
        assert kkt_violation(X, y, fit.coefficients, lam) <= tol
        assert fit.max_kkt_violation <= tol


def test_objective_non_increasing(rng):
    X, y, _ = sparse_problem(rng, 100, 150)
    lam = 0.05 * lambda_max(X, y)
    fit = lasso_fit(X, y, lam, record_objective=True)
    trace = fit.objective_trace
    assert trace.size > 2
    assert np.all(np.diff(trace) <= 1e-12)
    assert trace[-1] == pytest.approx(objective(X, y, fit.coefficients, lam), rel=1e-10)


def test_permutation_equivariance(rng):
    # cyclic CD visits coordinates in a different order, so agreement is at solver tolerance
    X, y, _ = sparse_problem(rng, 120, 80)
    lam = 0.1 * lambda_max(X, y)
    perm = rng.permutation(80)
    a = lasso_fit(X, y, lam).coefficients
    b = lasso_fit(X[:, perm], y, lam).coefficients
    np.testing.assert_allclose(b, a[perm], atol=1e-7)
    np.testing.assert_array_equal(b != 0, a[perm] != 0)


def test_warm_path_matches_cold_fits(rng):
    X, y, _ = sparse_problem(rng, 100, 200)
    grid = lambda_grid(lambda_max(X, y), 30, 1e-2)
    warm = lasso_path(X, y, grid)
    for fit, lam in zip(warm, grid):
        cold = lasso_fit(X, y, lam)
        assert np.max(np.abs(fit.coefficients - cold.coefficients)) <= 1e-6


def test_warm_start_argument(rng):
    X, y, _ = sparse_problem(rng, 60, 40)
    lam = 0.1 * lambda_max(X, y)
    cold = lasso_fit(X, y, lam)
    warm = lasso_fit(X, y, lam, warm_start=cold.coefficients)
    assert warm.iterations <= 2
    np.testing.assert_allclose(warm.coefficients, cold.coefficients, atol=1e-8)


def test_grid_endpoints():
    g = lambda_grid(2.0)
    assert g.shape == (100,)
    assert g[0] == 2.0 and g[-1] == pytest.approx(2e-3)
    assert np.all(np.diff(g) < 0)
    with pytest.raises(InputError):
        lambda_grid(0.0)


# lasso_cv


def test_cv_pure_noise_picks_heavy_shrinkage():
    hits = 0
    for rep in range(20):
        rng = np.random.default_rng(1000 + rep)
        X = rng.standard_normal((100, 50))
        y = rng.standard_normal(100)
        cv = lasso_cv(X, y, rng=rng)
        hits += cv.index_star < 25
    assert hits > 10


def test_cv_noiseless_recovery(rng):
    X = rng.standard_normal((200, 20))
    beta = np.zeros(20)
    beta[:4] = [3.0, -2.0, 1.5, 1.0]
    cv = lasso_cv(X, X @ beta, rng=rng)
    assert np.linalg.norm(cv.fit_at_star.coefficients - beta) <= 0.1 * np.linalg.norm(beta)


def test_cv_deterministic_and_well_formed():
    X, y, _ = sparse_problem(np.random.default_rng(3), 80, 120)
    a = lasso_cv(X, y, rng=np.random.default_rng(11))
    b = lasso_cv(X, y, rng=np.random.default_rng(11))
    assert a.lambda_star == b.lambda_star
    np.testing.assert_array_equal(a.cv_errors, b.cv_errors)
    assert a.lambda_grid[0] == pytest.approx(lambda_max(X, y))
    assert np.all(np.diff(a.lambda_grid) < 0)
    assert a.cv_errors[a.index_star] == a.cv_errors.min()
    # ties go to the larger penalty, so nothing before the argmin equals the minimum
    assert np.all(a.cv_errors[: a.index_star] > a.cv_errors.min())
    assert a.fit_at_star.lam == a.lambda_star


def test_cv_needs_enough_rows(rng):
    with pytest.raises(InputError):
        lasso_cv(rng.standard_normal((5, 3)), rng.standard_normal(5), n_folds=10, rng=rng)
    with pytest.raises(InputError):
        lasso_cv(rng.standard_normal((5, 3)), rng.standard_normal(5), n_folds=1, rng=rng)


# node-wise lasso


def test_nodewise_matches_direct_fit(rng):
    X = rng.standard_normal((60, 8))
    gamma = nodewise_lasso(X, 3, 0.05)
    direct = lasso_fit(np.delete(X, 3, axis=1), X[:, 3], 0.05).coefficients
    np.testing.assert_array_equal(gamma, direct)
    assert gamma.shape == (7,)


def test_nodewise_independent_columns(rng):
    X = rng.standard_normal((500, 100))
    gamma = nodewise_lasso(X, 0, 0.1)
    assert np.linalg.norm(gamma) <= 0.3


def test_nodewise_ar1_recovers_neighbour(rng):
    model = CovarianceModel.ar1(100, 0.5)
    X = sample_gaussian(500, model, rng)
    gamma = nodewise_lasso(X, 0, 0.05)
    assert abs(gamma[0] - 0.5) <= 0.15
    assert np.count_nonzero(np.abs(gamma[1:]) > 0.05) <= 5


def test_nodewise_zero_above_lambda_max(rng):
    X = rng.standard_normal((50, 10))
    lam = np.max(np.abs(np.delete(X, 2, axis=1).T @ X[:, 2])) / 50
    np.testing.assert_array_equal(nodewise_lasso(X, 2, lam), 0.0)


def test_nodewise_needs_two_columns(rng):
    with pytest.raises(InputError):
        nodewise_lasso(rng.standard_normal((10, 1)), 0, 0.1)


def _statistic(X, k, gamma):
    r = X[:, k] - np.delete(X, k, axis=1) @ gamma
    return np.max(np.abs(np.delete(X, k, axis=1).T @ r)) / np.linalg.norm(r)


def test_tuning_rule_identity_design():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((500, 1000))
    t = tune_nodewise_lambda(X, 0)
    assert t.satisfied
    assert _statistic(X, 0, t.gamma) <= math.sqrt(math.log(1000))
    assert t.statistic == pytest.approx(_statistic(X, 0, t.gamma), rel=1e-10)
    assert t.lam == t.grid[t.grid_index]


def test_tuning_rule_maximality(rng):
    X = sample_gaussian(200, CovarianceModel.ar1(150, 0.5), rng)
    k = 4
    t = tune_nodewise_lambda(X, k)
    assert t.satisfied and t.grid_index > 0
    bound = math.sqrt(math.log(150))
    # every larger grid value fails the bound, so the returned value is the largest that passes
    for lam in t.grid[: t.grid_index]:
        gamma = nodewise_lasso(X, k, lam)
        assert _statistic(X, k, gamma) >= bound
    assert t.statistic < bound


def test_tuning_rule_deterministic(rng):
    X = rng.standard_normal((100, 60))
    assert tune_nodewise_lambda(X, 2).lam == tune_nodewise_lambda(X.copy(), 2).lam


def test_tuning_rule_unsatisfiable_warns():
    # a column that is a copy of another can only be explained once gamma is large;
    # a short, coarse grid stops well before that
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 5))
    X[:, 1] = X[:, 0]
    with pytest.warns(TuningWarning):
        t = tune_nodewise_lambda(X, 0, grid_size=2, ratio=0.9)
    assert not t.satisfied
    assert t.lam == t.grid[0]
    np.testing.assert_array_equal(t.gamma, 0.0)


def test_tuning_preconditions(rng):
    with pytest.raises(InputError):
        tune_nodewise_lambda(rng.standard_normal((9, 5)), 0)
    with pytest.raises(InputError):
        tune_nodewise_lambda(rng.standard_normal((20, 2)), 0)


# pilot rate


def _pilot_error(n, p, link, seed):
    rng = np.random.default_rng(seed)
    model = CovarianceModel.identity(p)
    tau = make_tau("triangular", model, 5)
    X = sample_gaussian(n, model, rng)
    y = generate_responses(X, tau, link, rng)
    X, y = X - X.mean(0), y - y.mean()
    from simdebias.design import population_mu

    beta = population_mu(link) * tau.tau
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = lasso_cv(X, y, rng=rng).fit_at_star
    return np.linalg.norm(fit.coefficients - beta)


@pytest.mark.slow
@pytest.mark.parametrize("link", [LinkModel.linear_plus_noise(), LinkModel.sign_plus_noise()], ids=["linear", "sign"])
def test_pilot_rate_improves_with_n(link):
    small = np.median([_pilot_error(200, 400, link, s) for s in range(20)])
    large = np.median([_pilot_error(800, 1600, link, 100 + s) for s in range(20)])
    assert large < small
