"""Leave-k-out jackknife variance and Hermite degree selection."""

from dataclasses import dataclass

import numpy as np

from .debias import Dataset, fit_pilot, hermite_estimates, prepare_hermite
from .exceptions import InputError, JackknifeBlockError


@dataclass(frozen=True)
class JackknifePlan:
    """Disjoint blocks ``[b*j, b*j + b)`` of the first ``n`` positions.

    Positions past ``n_blocks * block`` are never left out.
    """

    n: int
    block: int = 10

    def __post_init__(self):
        if self.block < 1:
            raise InputError(f"block size must be positive, got {self.block}")
        if self.n_blocks < 2:
            raise InputError(f"need at least 2 blocks, got n={self.n} with block={self.block}")

    @property
    def n_blocks(self):
        return self.n // self.block

    def rows(self, j):
        return np.arange(j * self.block, (j + 1) * self.block)

    def blocks(self):
        return [self.rows(j) for j in range(self.n_blocks)]


def _without(data, positions):
    if isinstance(data, Dataset):
        # positions index the first sub-sample
        return data.without(data.plan.s1[positions])
    return np.delete(np.asarray(data), positions, axis=0)


def _check_plan(data, plan):
    size = data.n1 if isinstance(data, Dataset) else np.shape(data)[0]
    if plan.n > size:
        raise InputError(f"plan covers {plan.n} rows but the data has only {size}")


def leave_out_values(data, plan, estimator):
    """Estimator values with each block removed, shape ``(n_blocks,) + value shape``.

    For a :class:`Dataset` the blocks are taken from ``plan.s1`` (the rows the
    debiasing sums run over); plain arrays lose the block rows directly.
    """
    _check_plan(data, plan)
    values = []
    for j, rows in enumerate(plan.blocks()):
        try:
            values.append(np.asarray(estimator(_without(data, rows)), dtype=np.float64))
        except Exception as exc:
            raise JackknifeBlockError(j, exc) from exc
    return np.array(values)


def jackknife_variance(data, plan, estimator, *, scaled=False):
    """Leave-k-out variance ``(1/g) sum_j (theta_j - mean theta)^2``.

    Parameters
    ----------
    data : Dataset or array_like
    plan : JackknifePlan
    estimator : callable
        Maps the reduced data to a scalar (or a vector, estimated elementwise).
    scaled : bool
        Multiply by ``g - 1``, giving the usual delete-a-group variance of the
        full-sample estimator.  Without scaling the value is only proportional
        to it, which is enough for comparing estimators on the same plan.
    """
    return jackknife_spread(leave_out_values(data, plan, estimator), scaled=scaled)


def jackknife_spread(theta, *, scaled=False):
    """``(1/g) sum_j (theta_j - mean theta)^2`` over the first axis of `theta`.

    The values are sorted first, so the result does not depend on the order
    in which the blocks were evaluated.
    """
    theta = np.sort(np.asarray(theta, dtype=np.float64), axis=0)
    g = theta.shape[0]
    if g < 2:
        raise InputError(f"need at least 2 leave-out values, got {g}")
    var = np.mean((theta - theta.mean(axis=0)) ** 2, axis=0)
    if scaled:
        var = var * (g - 1)
    return float(var) if np.ndim(var) == 0 else var


def degree_variances(data, degrees, plan, *, cov=None, k=0, lam=None, rng=None):
    """Jackknife variance of the efficient estimate of ``beta_k`` for each degree.

    The pilot penalty is tuned once by cross-validation on ``s21`` (unless
    `lam` is given) and held fixed.  The blocks only remove rows of ``s1``, so
    the pilot, expansion coefficients and residual regression are shared by
    all leave-out fits.
    """
    degrees = _check_degrees(degrees)
    pilot = None
    if lam is not None:
        X21, y21 = data.part("s21")
        pilot = fit_pilot(X21, y21, lam=lam)
    state = prepare_hermite(data, k, max(degrees), cov=cov, pilot=pilot, rng=rng)

    def estimator(sub):
        return [e.beta_tilde for e in hermite_estimates(sub, state, degrees)]

    return dict(zip(degrees, np.atleast_1d(jackknife_variance(data, plan, estimator))))


def _check_degrees(degrees):
    degrees = [int(m) for m in degrees]
    if not degrees:
        raise InputError("candidate degree list is empty")
    if min(degrees) < 1:
        raise InputError("candidate degrees must be >= 1")
    return degrees


def select_degree(data, degrees, plan, *, estimator=None, cov=None, k=0, rng=None):
    """Candidate degree with the smallest jackknife variance (ties: smallest degree).

    Parameters
    ----------
    data : Dataset
    degrees : sequence of int
    plan : JackknifePlan
    estimator : callable, optional
        ``estimator(sub, m)`` returning the estimate at degree `m`.  Defaults to
        the efficient estimator of ``beta_k`` (see :func:`degree_variances`).
    """
    degrees = _check_degrees(degrees)
    if len(degrees) == 1:
        return degrees[0]
    if estimator is None:
        variances = degree_variances(data, degrees, plan, cov=cov, k=k, rng=rng)
    else:
        variances = {m: jackknife_variance(data, plan, lambda sub, m=m: estimator(sub, m)) for m in degrees}
    best = min(variances.values())
    return min(m for m in degrees if variances[m] == best)
