"""Penalized lasso by coordinate descent, cross-validation and node-wise regression.

All fits minimize ``(1/2n) ||y - X b||^2 + lam ||b||_1`` with no intercept and
no column standardization.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._cd import cd_solve
from ._validation import as_design, as_generator, as_response, as_vector, check_coordinate
from .exceptions import ConvergenceWarning, InputError, TuningWarning

MAX_SWEEPS = 100_000
GRID_SIZE = 100
GRID_RATIO = 1e-3
# strict solves refine until the KKT violation is this fraction of the reported tolerance
KKT_TARGET = 1e-3
REFINE_ROUNDS = 6
_NO_HISTORY = np.empty(0)


@dataclass
class LassoFit:
    coefficients: np.ndarray
    lam: float
    iterations: int
    max_kkt_violation: float
    converged: bool
    objective_trace: np.ndarray = None

    @property
    def support(self):
        return np.flatnonzero(self.coefficients)


@dataclass
class CvResult:
    lambda_grid: np.ndarray
    cv_errors: np.ndarray
    lambda_star: float
    fit_at_star: LassoFit
    n_folds: int

    @property
    def index_star(self):
        return int(np.flatnonzero(self.lambda_grid == self.lambda_star)[0])


@dataclass
class NodewiseTuning:
    """Outcome of the node-wise penalty search for one coordinate."""

    lam: float
    gamma: np.ndarray
    statistic: float
    bound: float
    grid_index: int
    satisfied: bool
    grid: np.ndarray


def default_tol(y):
    return 1e-8 * max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)


def kkt_tolerance(X, y):
    return 1e-7 * max(1.0, lambda_max(X, y))


def lambda_max(X, y):
    """Smallest penalty with an all-zero solution, ``||X'y||_inf / n``."""
    return float(np.max(np.abs(X.T @ y))) / X.shape[0]


def lambda_grid(lam_max, grid_size=GRID_SIZE, ratio=GRID_RATIO):
    """Descending geometric grid from `lam_max` to ``ratio * lam_max``."""
    if lam_max <= 0:
        raise InputError("the response is orthogonal to every column; no penalty grid exists")
    if grid_size < 1:
        raise InputError(f"grid_size must be positive, got {grid_size}")
    return lam_max * np.geomspace(1.0, ratio, int(grid_size))


def _fortran(X):
    return np.asfortranarray(X, dtype=np.float64)


def _kkt_violation(Xf, r, beta, lam, cols):
    g = (Xf.T @ r)[cols] / Xf.shape[0]
    b = beta[cols]
    active = b != 0.0
    viol = np.where(active, np.abs(g - lam * np.sign(b)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def _solve(Xf, colsq, r, beta, lam, tol, max_sweeps, cols, kkt_tol, record=False):
    """Run the compiled solver, tightening `tol` until the KKT check passes."""
    history = np.empty(min(max_sweeps, 10_000)) if record else _NO_HISTORY
    if not beta[cols].any():
        # zero start at or above lambda_max: zero is optimal, skip rounding noise from the solver
        viol = _kkt_violation(Xf, r, beta, lam * (1.0 + 1e-12), cols)
        if viol == 0.0:
            return 0, True, 0.0, (np.array([float(r @ r) / (2 * Xf.shape[0])]) if record else None)
    traces = []
    total = 0
    for _ in range(REFINE_ROUNDS):
        sweeps, converged, rec = cd_solve(
            Xf, r, beta, colsq, lam, tol, max_sweeps - total, cols, history
        )
        total += sweeps
        if record:
            traces.append(history[:rec].copy())
        viol = _kkt_violation(Xf, r, beta, lam, cols)
        if not converged or viol <= kkt_tol or total >= max_sweeps:
            break
        tol /= 100.0
    trace = np.concatenate(traces) if record else None
    return total, converged, viol, trace


class _Problem:
    """A design prepared once (Fortran order, column norms) for repeated solves."""

    def __init__(self, X):
        self.Xf = _fortran(X)
        self.n, self.p = self.Xf.shape
        self.colsq = np.einsum("ij,ij->j", self.Xf, self.Xf) / self.n
        self.all_cols = np.arange(self.p, dtype=np.int64)


def lasso_fit(X, y, lam, *, tol=None, max_sweeps=MAX_SWEEPS, warm_start=None, record_objective=False):
    """Solve the lasso at a single penalty.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
    lam : float
        Penalty level, > 0.
    tol : float, optional
        Stop when no coefficient moves by more than `tol` in a sweep.
        Defaults to ``1e-8 * max(1, ||y||_inf)``.
    max_sweeps : int
    warm_start : array_like, optional
        Initial coefficients.
    record_objective : bool
        Keep the objective value after every sweep in ``objective_trace``.

    Returns
    -------
    LassoFit
    """
    X = as_design(X)
    y = as_response(y, X.shape[0])
    lam = float(lam)
    if not lam > 0:
        raise InputError(f"lam must be positive, got {lam}")
    prob = _Problem(X)
    beta = np.zeros(prob.p) if warm_start is None else as_vector(warm_start, prob.p, name="warm_start").copy()
    r = y - prob.Xf @ beta if warm_start is not None else y.copy()
    tol = default_tol(y) if tol is None else float(tol)
    sweeps, converged, viol, trace = _solve(
        prob.Xf, prob.colsq, r, beta, lam, tol, int(max_sweeps), prob.all_cols,
        KKT_TARGET * kkt_tolerance(prob.Xf, y), record=record_objective,
    )
    if not converged:
        warnings.warn(f"lasso did not converge in {sweeps} sweeps at lam={lam:.4g}", ConvergenceWarning)
    return LassoFit(beta, lam, sweeps, viol, converged, trace)


def _path(prob, y, lambdas, tol, max_sweeps, stop_dev_ratio=None, cols=None, kkt_tol=None, min_dev_gain=None):
    cols = prob.all_cols if cols is None else cols
    kkt_tol = KKT_TARGET * kkt_tolerance(prob.Xf, y) if kkt_tol is None else kkt_tol
    beta = np.zeros(prob.p)
    r = y.copy()
    null_dev = float(y @ y)
    ratio_old = 0.0
    coefs, info = [], []
    for lam in lambdas:
        sweeps, converged, viol, _ = _solve(prob.Xf, prob.colsq, r, beta, lam, tol, max_sweeps, cols, kkt_tol)
        coefs.append(beta.copy())
        info.append((float(lam), sweeps, viol, converged))
        if null_dev > 0:
            ratio = 1.0 - (r @ r) / null_dev
            if stop_dev_ratio is not None and ratio >= stop_dev_ratio:
                break
            if min_dev_gain is not None and len(coefs) > 1 and ratio - ratio_old < min_dev_gain * ratio:
                break
            ratio_old = ratio
    return np.array(coefs), info


def lasso_path(X, y, lambdas, *, tol=None, max_sweeps=MAX_SWEEPS, stop_dev_ratio=None):
    """Warm-started fits along `lambdas` (in the given order).

    With `stop_dev_ratio`, the path ends at the first penalty whose fit
    explains at least that fraction of ``||y||^2``.
    """
    X = as_design(X)
    y = as_response(y, X.shape[0])
    lambdas = np.asarray(lambdas, dtype=np.float64).ravel()
    if np.any(lambdas <= 0):
        raise InputError("all penalties must be positive")
    prob = _Problem(X)
    tol = default_tol(y) if tol is None else float(tol)
    coefs, info = _path(prob, y, lambdas, tol, int(max_sweeps), stop_dev_ratio)
    return [LassoFit(b, lam, s, v, c) for b, (lam, s, v, c) in zip(coefs, info)]


def lasso_cv(
    X, y, n_folds=10, grid_size=GRID_SIZE, rng=None, *,
    ratio=GRID_RATIO, path_tol=1e-5, stop_dev_ratio=0.999, min_dev_gain=1e-5, max_sweeps=MAX_SWEEPS,
):
    """K-fold cross-validated lasso; the minimizing penalty is refit on all rows.

    The grid runs geometrically from ``||X'y||_inf / n`` down to ``ratio`` times
    that.  Like ``cv.glmnet``, the full-data path stops once the fit explains
    `stop_dev_ratio` of ``||y||^2``, or once a step raises that fraction by
    less than `min_dev_gain` (relative), and the grid is truncated there; a
    fold path that stops earlier predicts with its last fit.  Fold paths are solved to
    the looser coefficient tolerance ``path_tol * max(1, ||y||_inf)``; the final
    refit uses the default strict tolerance.  Ties in the pooled held-out
    squared error go to the larger penalty.
    """
    X = as_design(X)
    n = X.shape[0]
    y = as_response(y, n)
    if n_folds < 2 or n < n_folds:
        raise InputError(f"need n >= n_folds >= 2, got n={n}, n_folds={n_folds}")
    rng = as_generator(rng)
    prob = _Problem(X)
    grid = lambda_grid(lambda_max(prob.Xf, y), grid_size, ratio)
    tol = path_tol * max(1.0, float(np.max(np.abs(y))))
    # loose path solves skip the KKT refinement, which would undo the looser tol
    full_coefs, _ = _path(prob, y, grid, tol, max_sweeps, stop_dev_ratio, kkt_tol=math.inf, min_dev_gain=min_dev_gain)
    grid = grid[: full_coefs.shape[0]]

    folds = np.array_split(rng.permutation(n), n_folds)
    sq_err = np.zeros(grid.shape[0])
    for test in folds:
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        sub = _Problem(prob.Xf[train])
        coefs, _ = _path(sub, y[train], grid, tol, max_sweeps, stop_dev_ratio, kkt_tol=math.inf, min_dev_gain=min_dev_gain)
        if coefs.shape[0] < grid.shape[0]:
            pad = np.repeat(coefs[-1:], grid.shape[0] - coefs.shape[0], axis=0)
            coefs = np.vstack([coefs, pad])
        resid = y[test][:, None] - prob.Xf[test] @ coefs.T
        sq_err += np.einsum("ij,ij->j", resid, resid)
    cv_errors = sq_err / n
    i_star = int(np.argmin(cv_errors))
    lam_star = float(grid[i_star])
    fit = lasso_fit(prob.Xf, y, lam_star, warm_start=full_coefs[i_star], max_sweeps=max_sweeps)
    return CvResult(grid, cv_errors, lam_star, fit, int(n_folds))


def nodewise_lasso(X, k, lam, *, tol=None, max_sweeps=MAX_SWEEPS):
    """Lasso of column `k` on the remaining columns; returns the (p-1)-vector."""
    X = as_design(X, min_cols=2)
    k = check_coordinate(k, X.shape[1])
    lam = float(lam)
    if not lam > 0:
        raise InputError(f"lam must be positive, got {lam}")
    prob = _Problem(X)
    y = prob.Xf[:, k].copy()
    cols = np.delete(prob.all_cols, k)
    beta = np.zeros(prob.p)
    tol = default_tol(y) if tol is None else float(tol)
    kkt_tol = KKT_TARGET * 1e-7 * max(1.0, float(np.max(np.abs(np.delete(prob.Xf.T @ y, k)))) / prob.n)
    _, converged, _, _ = _solve(prob.Xf, prob.colsq, y, beta, lam, tol, int(max_sweeps), cols, kkt_tol)
    if not converged:
        warnings.warn(f"node-wise lasso for column {k} did not converge", ConvergenceWarning)
    return np.delete(beta, k)


def _nodewise_statistic(Xf, r, k):
    norm = math.sqrt(float(r @ r))
    if norm == 0.0:
        return math.inf
    c = Xf.T @ r
    c[k] = 0.0
    return float(np.max(np.abs(c))) / norm


def tune_nodewise_lambda(X, k, grid_size=GRID_SIZE, ratio=GRID_RATIO, *, tol=None, max_sweeps=MAX_SWEEPS):
    """Largest grid penalty whose node-wise residuals pass the score bound.

    Walks down the grid from ``||X_{-k}' x_k||_inf / n`` and stops at the
    first penalty with ``max_{j != k} |sum_i r_i x_ij| / ||r|| < sqrt(log p)``,
    where ``r = x_k - X_{-k} gamma(lam)`` is recomputed at every penalty.

    Returns
    -------
    NodewiseTuning
        ``satisfied`` is False (and a TuningWarning is emitted) when no grid
        value passes; the grid maximum is returned in that case.
    """
    X = as_design(X, min_rows=10, min_cols=3)
    k = check_coordinate(k, X.shape[1])
    prob = _Problem(X)
    xk = prob.Xf[:, k].copy()
    cols = np.delete(prob.all_cols, k)
    scores = prob.Xf.T @ xk / prob.n
    scores[k] = 0.0
    grid = lambda_grid(float(np.max(np.abs(scores))), grid_size, ratio)
    bound = math.sqrt(math.log(prob.p))
    tol = default_tol(xk) if tol is None else float(tol)
    kkt_tol = KKT_TARGET * 1e-7 * max(1.0, grid[0])
    beta = np.zeros(prob.p)
    r = xk.copy()
    first_stat = None
    for i, lam in enumerate(grid):
        _, converged, _, _ = _solve(prob.Xf, prob.colsq, r, beta, lam, tol, max_sweeps, cols, kkt_tol)
        if not converged:
            warnings.warn(f"node-wise lasso for column {k} did not converge at lam={lam:.4g}", ConvergenceWarning)
        stat = _nodewise_statistic(prob.Xf, r, k)
        if first_stat is None:
            first_stat = stat
        if stat < bound:
            return NodewiseTuning(float(lam), np.delete(beta, k), stat, bound, i, True, grid)
    warnings.warn(
        f"node-wise score bound sqrt(log p)={bound:.3f} unattainable for column {k}; using the grid maximum",
        TuningWarning,
    )
    return NodewiseTuning(float(grid[0]), np.zeros(prob.p - 1), first_stat, bound, 0, False, grid)
