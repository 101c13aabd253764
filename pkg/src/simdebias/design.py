"""Design distributions, single-index response models and population quantities.

Indices are 0-based throughout the library (the CLI speaks 1-based).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln

from ._validation import as_design, as_generator, check_coordinate
from .exceptions import InputError, NotPositiveDefiniteError
from .hermite import gauss_hermite_rule

IDENTITY = "identity"
AR1 = "ar1"
EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Population covariance of the design rows.

    Use the constructors :meth:`identity`, :meth:`ar1` and :meth:`explicit`.
    """

    kind: str
    p: int
    rho: float = 0.0
    matrix: np.ndarray = None
    _chol: np.ndarray = field(default=None, repr=False)

    @classmethod
    def identity(cls, p):
        return cls(IDENTITY, _check_dim(p))

    @classmethod
    def ar1(cls, p, rho):
        rho = float(rho)
        if not -1.0 < rho < 1.0:
            raise InputError(f"AR(1) correlation must lie in (-1, 1), got {rho}")
        if rho == 0.0:
            return cls(IDENTITY, _check_dim(p))
        return cls(AR1, _check_dim(p), rho=rho)

    @classmethod
    def explicit(cls, matrix):
        S = np.array(matrix, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise InputError(f"covariance matrix must be square, got shape {S.shape}")
        p = _check_dim(S.shape[0])
        if not np.all(np.isfinite(S)):
            raise InputError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(S))))
        if np.max(np.abs(S - S.T)) > 1e-12 * scale:
            raise InputError("covariance matrix is not symmetric")
        S = 0.5 * (S + S.T)
        try:
            chol = linalg.cholesky(S, lower=True)
        except linalg.LinAlgError:
            raise NotPositiveDefiniteError(linalg.eigvalsh(S)[0]) from None
        lam_min = linalg.eigvalsh(S, subset_by_index=[0, 0])[0]
        if lam_min <= 0.0:
            raise NotPositiveDefiniteError(lam_min)
        return cls(EXPLICIT, p, matrix=S, _chol=chol)

    def dense(self):
        """The p x p covariance matrix."""
        if self.kind == IDENTITY:
            return np.eye(self.p)
        if self.kind == AR1:
            idx = np.arange(self.p)
            return self.rho ** np.abs(np.subtract.outer(idx, idx)).astype(np.float64)
        return self.matrix.copy()

    def block(self, rows, cols=None):
        """Sub-block ``Sigma[rows][:, cols]`` without materializing Sigma."""
        rows = np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        if self.kind == IDENTITY:
            return (rows[:, None] == cols[None, :]).astype(np.float64)
        if self.kind == AR1:
            return self.rho ** np.abs(rows[:, None] - cols[None, :]).astype(np.float64)
        return self.matrix[np.ix_(rows, cols)]

    def cholesky(self):
        """Lower-triangular ``B`` with ``B @ B.T == Sigma``."""
        if self.kind == IDENTITY:
            return np.eye(self.p)
        if self.kind == AR1:
            idx = np.arange(self.p)
            lag = np.subtract.outer(idx, idx)
            B = np.where(lag >= 0, self.rho ** np.maximum(lag, 0).astype(np.float64), 0.0)
            B[:, 1:] *= math.sqrt(1.0 - self.rho**2)
            return B
        return self._chol.copy()

    def apply_factor(self, Z):
        """Map rows ``z`` to ``B z`` (so iid N(0, I) rows become N(0, Sigma))."""
        Z = np.asarray(Z, dtype=np.float64)
        if self.kind == IDENTITY:
            return Z.copy()
        if self.kind == AR1:
            # B z for the AR(1) Cholesky factor is the AR(1) recursion
            X = np.empty_like(Z)
            c = math.sqrt(1.0 - self.rho**2)
            X[:, 0] = Z[:, 0]
            for j in range(1, self.p):
                X[:, j] = self.rho * X[:, j - 1] + c * Z[:, j]
            return X
        return Z @ self._chol.T

    def quad_form(self, b):
        """``b' Sigma b`` using only the support of `b`."""
        b = np.asarray(b, dtype=np.float64)
        S = np.flatnonzero(b)
        if S.size == 0:
            return 0.0
        bs = b[S]
        return float(bs @ self.block(S) @ bs)


def _check_dim(p):
    if int(p) != p or p < 2:
        raise InputError(f"dimension p must be an integer >= 2, got {p!r}")
    return int(p)


def build_covariance(model):
    """Return ``(Sigma, B)`` with ``B`` the lower Cholesky factor."""
    return model.dense(), model.cholesky()


@dataclass(frozen=True)
class RadialLaw:
    """Law of the radius ``v`` in ``x = v B u``, normalized so ``E v^2 = p``.

    ``kind="chi"`` gives ``v^2 ~ chi^2_p`` (the Gaussian design);
    ``kind="uniform"`` gives ``v = sqrt(3p) U`` with ``U ~ Uniform(0, 1)``.
    """

    kind: str = "chi"

    def __post_init__(self):
        if self.kind not in ("chi", "uniform"):
            raise InputError(f"unknown radial law {self.kind!r}")

    def sample(self, n, p, rng):
        rng = as_generator(rng)
        if self.kind == "chi":
            return np.sqrt(rng.chisquare(p, size=n))
        return math.sqrt(3.0 * p) * rng.uniform(size=n)


@dataclass(frozen=True)
class LinkModel:
    """Random link ``y = f(<x, tau>)`` with noise independent of the design.

    kinds: ``sign`` (sign(t) + sigma*eps), ``exp`` (U*exp(t), U ~ Exp(1)),
    ``sine`` (amplitude*sin(t) + noise*eps), ``linear`` (t + sigma*eps).
    """

    kind: str
    sigma: float = 1.0
    amplitude: float = 5.0
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in ("sign", "exp", "sine", "linear"):
            raise InputError(f"unknown link {self.kind!r}")
        if self.sigma < 0 or self.noise < 0:
            raise InputError("noise scales must be non-negative")

    @classmethod
    def sign_plus_noise(cls, sigma=1.0):
        return cls("sign", sigma=float(sigma))

    @classmethod
    def exp_multiplicative(cls):
        return cls("exp")

    @classmethod
    def scaled_sine(cls, amplitude=5.0, noise=0.1):
        return cls("sine", amplitude=float(amplitude), noise=float(noise))

    @classmethod
    def linear_plus_noise(cls, sigma=1.0):
        return cls("linear", sigma=float(sigma))

    @classmethod
    def parse(cls, text):
        """Parse ``sign[:sigma]``, ``exp``, ``sine[:amplitude[:noise]]``, ``linear[:sigma]``."""
        name, *args = [t.strip() for t in str(text).split(":")]
        try:
            values = [float(a) for a in args]
        except ValueError:
            raise InputError(f"bad link parameters in {text!r}") from None
        name = name.lower()
        if name in ("sign", "model1"):
            return cls.sign_plus_noise(*values[:1])
        if name in ("exp", "model2"):
            if values:
                raise InputError("the exp link takes no parameters")
            return cls.exp_multiplicative()
        if name == "sine":
            return cls.scaled_sine(*values[:2])
        if name == "linear":
            return cls.linear_plus_noise(*values[:1])
        raise InputError(f"unknown link {text!r}")

    def label(self):
        if self.kind == "exp":
            return "exp"
        if self.kind == "sine":
            return f"sine:{self.amplitude:g}:{self.noise:g}"
        return f"{self.kind}:{self.sigma:g}"

    @property
    def smooth(self):
        return self.kind != "sign"

    def mean(self, t):
        """Conditional mean ``g(t) = E[y | <x, tau> = t]``."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "sign":
            return np.sign(t)
        if self.kind == "exp":
            return np.exp(t)
        if self.kind == "sine":
            return self.amplitude * np.sin(t)
        return t

    def respond(self, index, rng):
        index = np.asarray(index, dtype=np.float64)
        rng = as_generator(rng)
        n = index.shape[0]
        if self.kind == "sign":
            return np.sign(index) + self.sigma * rng.standard_normal(n)
        if self.kind == "exp":
            return rng.exponential(1.0, size=n) * np.exp(index)
        if self.kind == "sine":
            return self.amplitude * np.sin(index) + self.noise * rng.standard_normal(n)
        return index + self.sigma * rng.standard_normal(n)


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """Covariance model, radial law and mean shift of the design rows."""

    cov: CovarianceModel
    radial: RadialLaw = None
    mean_shift: float = 0.0

    @property
    def p(self):
        return self.cov.p

    def sample(self, n, rng):
        """Zero-mean draws (the mean shift is added by the caller)."""
        if self.radial is None:
            return sample_gaussian(n, self.cov, rng)
        return sample_elliptical(n, self.cov, self.radial, rng)


@dataclass(frozen=True, eq=False)
class IndexVector:
    tau: np.ndarray
    s: int
    normalization: float

    @property
    def support(self):
        return np.flatnonzero(self.tau)


def sample_gaussian(n, model, rng):
    """Draw `n` iid rows from N(0, Sigma)."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = as_generator(rng)
    return model.apply_factor(rng.standard_normal((int(n), model.p)))


def sample_elliptical(n, model, radial, rng):
    """Draw `n` rows ``v B u`` with u uniform on the sphere and v from `radial`."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = as_generator(rng)
    G = rng.standard_normal((int(n), model.p))
    U = G / np.linalg.norm(G, axis=1, keepdims=True)
    v = radial.sample(int(n), model.p, rng)
    return model.apply_factor(v[:, None] * U)


def population_gamma(model, k):
    """Population regression of coordinate `k` on the others.

    Returns
    -------
    gamma : ndarray, shape (p - 1,)
        Solves ``Sigma[-k, -k] gamma = Sigma[-k, k]``.
    e_r2 : float
        Residual variance ``Sigma[k, k] - Sigma[k, -k] gamma``.
    """
    p = model.p
    k = check_coordinate(k, p)
    full = np.zeros(p)
    if model.kind == IDENTITY:
        e_r2 = 1.0
    elif model.kind == AR1:
        # the AR(1) precision matrix is tridiagonal
        rho = model.rho
        interior = 0 < k < p - 1
        omega_kk = (1.0 + rho**2 if interior else 1.0) / (1.0 - rho**2)
        omega_nb = -rho / (1.0 - rho**2)
        for j in (k - 1, k + 1):
            if 0 <= j < p:
                full[j] = -omega_nb / omega_kk
        e_r2 = 1.0 / omega_kk
    else:
        rest = np.delete(np.arange(p), k)
        S = model.matrix
        try:
            g = linalg.solve(S[np.ix_(rest, rest)], S[rest, k], assume_a="pos")
        except linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                linalg.eigvalsh(S[np.ix_(rest, rest)])[0], f"singular Sigma[-k,-k]: {exc}"
            ) from exc
        full[rest] = g
        e_r2 = float(S[k, k] - S[k, rest] @ g)
    return np.delete(full, k), float(e_r2)


def make_tau(pattern, model, s=None):
    """Sparse index with triangular weights ``s, s-1, ..., 1``, scaled so ``||Sigma^{1/2} tau|| = 1``.

    ``pattern="sine"`` is the 10-sparse vector ``(10, 9, ..., 1, 0, ...)``.
    """
    if pattern == "sine":
        s = 10
    elif pattern != "triangular":
        raise InputError(f"unknown tau pattern {pattern!r}")
    if s is None or int(s) != s or s < 1:
        raise InputError(f"sparsity s must be a positive integer, got {s!r}")
    s = int(s)
    if s > model.p:
        raise InputError(f"sparsity s={s} exceeds dimension p={model.p}")
    tau = np.zeros(model.p)
    tau[:s] = np.arange(s, 0, -1, dtype=np.float64)
    tau /= math.sqrt(model.quad_form(tau))
    return IndexVector(tau=tau, s=s, normalization=math.sqrt(model.quad_form(tau)))


def generate_responses(X, tau, link, rng):
    """Responses ``y_i = f_i(<x_i, tau>)`` for the given link model."""
    X = np.asarray(X, dtype=np.float64)
    tau = tau.tau if isinstance(tau, IndexVector) else np.asarray(tau, dtype=np.float64)
    if tau.shape != (X.shape[1],):
        raise InputError(f"tau has length {tau.shape[0]} but X has {X.shape[1]} columns")
    return link.respond(X @ tau, rng)


def center_columns(X):
    """Subtract column means, ``(I - 11'/n) X``."""
    X = as_design(X, min_rows=2)
    return X - X.mean(axis=0)


_GH64 = None


def _gh64():
    global _GH64
    if _GH64 is None:
        _GH64 = gauss_hermite_rule(64)
    return _GH64


def _odd_part_slope(link, magnitude):
    """``(a/2) (g(a) - g(-a))``: the part of ``g(xi) xi`` surviving symmetrization."""
    return 0.5 * magnitude * (link.mean(magnitude) - link.mean(-magnitude))


def population_mu(link, radial=None, p=None):
    """``mu = E[y <x, tau>]`` for a standardized index.

    Gaussian designs use a 64-node Gauss-Hermite rule for smooth links and a
    64-node Gauss-Laguerre rule on the folded integral for the sign link (the
    substitution ``t = xi^2 / 2`` makes the jump at zero an endpoint).  For the
    scaled-uniform elliptical radius the index is ``v * u_1`` and the slope is
    a two-dimensional integral over the radius and the first sphere coordinate.
    """
    if radial is None or radial.kind == "chi":
        if link.smooth:
            rule = _gh64()
            return float(rule.weights @ (link.mean(rule.nodes) * rule.nodes))
        t, w = np.polynomial.laguerre.laggauss(64)
        a = np.sqrt(2.0 * t)
        return float(w @ (link.mean(a) - link.mean(-a)) / math.sqrt(2.0 * math.pi))
    if p is None:
        raise InputError("the elliptical slope needs the dimension p")
    return _uniform_radial_mu(link, int(p))


def _uniform_radial_mu(link, p):
    # a = sqrt(p) |u_1| has density prop. to (1 - a^2/p)^((p-3)/2) on (0, sqrt(p))
    log_c = gammaln(p / 2.0) - 0.5 * math.log(math.pi) - gammaln((p - 1) / 2.0)
    upper = min(math.sqrt(p), 40.0)

    def density(a):
        return 2.0 * math.exp(log_c + 0.5 * (p - 3) * math.log1p(-a * a / p)) / math.sqrt(p)

    u, wu = np.polynomial.legendre.leggauss(64)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    total = 0.0
    for ui, wi in zip(u, wu):
        scale = math.sqrt(3.0) * ui  # v / sqrt(p)

        def integrand(a):
            return float(_odd_part_slope(link, scale * a)) * density(a)

        val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += wi * val
    return total
