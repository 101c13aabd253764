"""Exception and warning types raised by simdebias."""


class SimDebiasError(Exception):
    """Base class for errors raised by this package."""


class InputError(SimDebiasError, ValueError):
    """Malformed or non-finite user input."""


class NotPositiveDefiniteError(SimDebiasError, ValueError):
    """A covariance matrix failed the positive-definiteness check."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = float(eigenvalue)
        super().__init__(
            message
            or f"covariance matrix is not positive definite: smallest eigenvalue {self.eigenvalue:.6g}"
        )


class DegenerateDenominatorError(SimDebiasError, ArithmeticError):
    """The debiasing denominator sum(r_i x_ik) is numerically zero."""

    def __init__(self, k, value, n):
        self.k = k
        self.value = float(value)
        super().__init__(
            f"degenerate debiasing denominator for coordinate {k}: "
            f"|sum r_i x_ik| / n = {abs(self.value) / max(n, 1):.3g}"
        )


class IllConditionedError(SimDebiasError, ArithmeticError):
    """A matrix that must be inverted is too ill-conditioned."""

    def __init__(self, condition):
        self.condition = float(condition)
        super().__init__(f"matrix is ill-conditioned (condition number {self.condition:.3g})")


class ConvergenceFailure(SimDebiasError, RuntimeError):
    """A solver did not reach its stopping criterion."""


class ReplicateFailureError(SimDebiasError, RuntimeError):
    """Too many Monte Carlo replicates failed."""

    def __init__(self, failures, replicates, reasons):
        self.failures = failures
        self.replicates = replicates
        self.reasons = reasons
        shown = "; ".join(f"replicate {i}: {msg}" for i, msg in reasons[:5])
        super().__init__(
            f"{failures} of {replicates} replicates failed (limit 5%). First failures: {shown}"
        )


class ConfigError(SimDebiasError, ValueError):
    """Invalid experiment configuration."""


class JackknifeBlockError(SimDebiasError, RuntimeError):
    """The estimator failed on one leave-out block."""

    def __init__(self, block, cause):
        self.block = block
        super().__init__(f"estimator failed on leave-out block {block}: {cause}")


class ConvergenceWarning(UserWarning):
    """A solver stopped before meeting its tolerance."""


class TuningWarning(UserWarning):
    """A tuning rule could not be satisfied on its search grid."""


class ZeroPilotError(SimDebiasError, ArithmeticError):
    """The pilot estimate is zero, so it defines no index direction."""

    def __init__(self, norm):
        self.norm = float(norm)
        super().__init__(f"pilot estimate has ||Sigma^(1/2) beta_hat|| = {self.norm:.3g}; no direction to expand along")
