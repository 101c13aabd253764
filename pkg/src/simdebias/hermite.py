"""Normalized probabilists' Hermite polynomials and link-function expansions.

``h_j(x) = He_j(x) / sqrt(j!)`` form an orthonormal basis of L2(N(0, 1)).
Everything here is evaluated with the three-term recurrence

    h_0 = 1,  h_1 = x,  h_{j+1} = (x h_j - sqrt(j) h_{j-1}) / sqrt(j + 1),

which is stable in double precision for the degrees we allow.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from ._validation import as_design, as_response, as_vector
from .exceptions import InputError

MAX_DEGREE = 64

KNOWN_SIGMA = "known"
ESTIMATED_SIGMA = "estimated"


def _check_degree(j):
    if int(j) != j or j < 0:
        raise InputError(f"Hermite degree must be a non-negative integer, got {j!r}")
    if j > MAX_DEGREE:
        raise InputError(f"Hermite degree {j} exceeds the supported maximum {MAX_DEGREE}")
    return int(j)


def hermite_eval_all(m, xi):
    """Evaluate ``h_0, ..., h_m`` at `xi`.

    Parameters
    ----------
    m : int
        Maximum degree (0 <= m <= 64).
    xi : float or array_like
        Evaluation points.

    Returns
    -------
    ndarray
        Shape ``np.shape(xi) + (m + 1,)``.
    """
    m = _check_degree(m)
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty(xi.shape + (m + 1,))
    out[..., 0] = 1.0
    if m >= 1:
        out[..., 1] = xi
    for j in range(1, m):
        out[..., j + 1] = (xi * out[..., j] - math.sqrt(j) * out[..., j - 1]) / math.sqrt(j + 1)
    return out


def hermite_eval(j, xi):
    """Evaluate the single normalized Hermite polynomial ``h_j`` at `xi`."""
    j = _check_degree(j)
    values = hermite_eval_all(j, xi)[..., j]
    return float(values) if np.ndim(values) == 0 else values


def default_degree(n):
    """Default expansion degree ``floor(ln(n) ** (2/3))``."""
    if n < 2:
        raise InputError(f"default_degree needs n >= 2, got {n}")
    return int(math.floor(math.log(n) ** (2.0 / 3.0)))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for expectations under the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, func):
        """Approximate ``E f(xi)`` for ``xi ~ N(0, 1)``."""
        return float(np.dot(self.weights, func(self.nodes)))


def gauss_hermite_rule(n_nodes):
    """Gauss-Hermite rule for the standard normal weight via Golub-Welsch.

    The Jacobi matrix of the monic probabilists' recurrence has zero diagonal
    and off-diagonal entries ``sqrt(j)``; its eigenvalues are the nodes and the
    squared first eigenvector components are the weights.
    """
    if int(n_nodes) != n_nodes or not 2 <= n_nodes <= 128:
        raise InputError(f"n_nodes must be an integer in [2, 128], got {n_nodes!r}")
    n_nodes = int(n_nodes)
    off = np.sqrt(np.arange(1, n_nodes, dtype=np.float64))
    try:
        nodes, vecs = eigh_tridiagonal(np.zeros(n_nodes), off)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ArithmeticError(f"Golub-Welsch eigen-solve failed: {exc}") from exc
    weights = vecs[0] ** 2
    # exact symmetry about zero
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()
    return QuadratureRule(nodes=nodes, weights=weights)


@dataclass
class HermiteCoeffs:
    """Estimated expansion ``g_m = sum_j mu[j] h_j`` along direction `tau_hat`.

    ``mu[1]`` is always the pilot slope ``||Sigma^{1/2} beta_hat||``; the other
    entries are empirical averages on a held-out block.
    """

    mu: np.ndarray
    tau_hat: np.ndarray
    mu1_source: str = KNOWN_SIGMA
    degree: int = field(init=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.tau_hat = np.asarray(self.tau_hat, dtype=np.float64)
        if self.mu.ndim != 1 or self.mu.shape[0] < 1:
            raise InputError("mu must be a non-empty 1-D array")
        self.degree = self.mu.shape[0] - 1
        _check_degree(self.degree)

    def truncate(self, m):
        """Return the leading ``m + 1`` coefficients as a new object."""
        m = _check_degree(m)
        if m > self.degree:
            raise InputError(f"cannot truncate degree-{self.degree} coefficients to degree {m}")
        return HermiteCoeffs(self.mu[: m + 1].copy(), self.tau_hat, self.mu1_source)


def estimate_coeffs(X22, y22, tau_hat, mu1, m, *, mu1_source=KNOWN_SIGMA):
    """Estimate ``mu_0, ..., mu_m`` as ``mean(y * h_j(<x, tau_hat>))``.

    The first-order coefficient is not estimated here: `mu1` is inserted as
    given (it comes from the pilot).
    """
    if m < 1:
        raise InputError(f"expansion degree must be >= 1, got {m}")
    X22 = as_design(X22, name="X22")
    y22 = as_response(y22, X22.shape[0], name="y22")
    tau_hat = as_vector(tau_hat, X22.shape[1], name="tau_hat")
    H = hermite_eval_all(m, X22 @ tau_hat)
    mu = H.T @ y22 / X22.shape[0]
    mu[1] = float(mu1)
    return HermiteCoeffs(mu, tau_hat, mu1_source)


def link_estimate(coeffs, xi):
    """Evaluate ``g_m(xi) = sum_j mu_j h_j(xi)``."""
    values = hermite_eval_all(coeffs.degree, xi) @ coeffs.mu
    return float(values) if np.ndim(values) == 0 else values
