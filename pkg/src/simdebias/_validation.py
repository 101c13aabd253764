"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_random_state

from .exceptions import InputError


def as_design(X, *, name="X", min_rows=1, min_cols=1):
    """Return `X` as a finite 2-D float64 array or raise InputError."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < min_rows:
        raise InputError(f"{name} needs at least {min_rows} rows, got {n}")
    if p < min_cols:
        raise InputError(f"{name} needs at least {min_cols} columns, got {p}")
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise InputError(f"{name} has a non-finite entry at row {i}, column {j}")
    return X


def as_response(y, n=None, *, name="y"):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {y.shape}")
    if n is not None and y.shape[0] != n:
        raise InputError(f"{name} has {y.shape[0]} entries but the design has {n} rows")
    if not np.all(np.isfinite(y)):
        i = int(np.flatnonzero(~np.isfinite(y))[0])
        raise InputError(f"{name} has a non-finite entry at position {i}")
    return y


def as_vector(v, size, *, name):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] != size:
        raise InputError(f"{name} must have length {size}, got {v.shape[0]}")
    return v


def check_coordinate(k, p, *, name="k"):
    if not isinstance(k, numbers.Integral) or isinstance(k, bool):
        raise InputError(f"{name} must be an integer index, got {k!r}")
    if not 0 <= k < p:
        raise InputError(f"{name}={k} is out of range for {p} columns")
    return int(k)


def check_level(level):
    level = float(level)
    if not 0.0 < level < 1.0:
        raise InputError(f"confidence level must lie in (0, 1), got {level}")
    return level


def as_generator(rng):
    """Coerce None / int / SeedSequence / RandomState / Generator to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.default_rng(rng)
    if isinstance(rng, np.random.RandomState):
        return np.random.default_rng(rng.randint(2**32 - 1))
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    # let sklearn produce its usual error message
    state = check_random_state(rng)
    return np.random.default_rng(state.randint(2**32 - 1))
