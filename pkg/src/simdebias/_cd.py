"""Compiled cyclic coordinate descent for (1/2n)||y - Xb||^2 + lam ||b||_1.

`X` must be Fortran-ordered float64.  `r` holds the current residual
``y - X b`` and is updated in place together with `b`.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _sweep(X, r, beta, colsq, lam, idx, m, inv_n):
    n = X.shape[0]
    max_delta = 0.0
    for t in range(m):
        j = idx[t]
        cj = colsq[j]
        if cj == 0.0:
            continue
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        old = beta[j]
        z = g * inv_n + cj * old
        if z > lam:
            new = (z - lam) / cj
        elif z < -lam:
            new = (z + lam) / cj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * delta
            beta[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


@njit(cache=True)
def _objective(r, beta, lam, inv_n):
    return 0.5 * inv_n * np.dot(r, r) + lam * np.sum(np.abs(beta))


@njit(cache=True)
def cd_solve(X, r, beta, colsq, lam, tol, max_sweeps, cols, history):
    """Run sweeps until the largest coefficient change is <= tol.

    Alternates a sweep over `cols` with inner sweeps over the current
    active set.  Returns ``(sweeps, converged, n_recorded)``; objective values
    after each sweep are written to `history` while it has room.
    """
    inv_n = 1.0 / X.shape[0]
    n_cols = cols.shape[0]
    cap = history.shape[0]
    rec = 0
    sweeps = 0
    active = np.empty(n_cols, dtype=np.int64)
    while sweeps < max_sweeps:
        delta = _sweep(X, r, beta, colsq, lam, cols, n_cols, inv_n)
        sweeps += 1
        if rec < cap:
            history[rec] = _objective(r, beta, lam, inv_n)
            rec += 1
        if delta <= tol:
            return sweeps, True, rec
        n_active = 0
        for t in range(n_cols):
            if beta[cols[t]] != 0.0:
                active[n_active] = cols[t]
                n_active += 1
        while sweeps < max_sweeps:
            delta = _sweep(X, r, beta, colsq, lam, active, n_active, inv_n)
            sweeps += 1
            if rec < cap:
                history[rec] = _objective(r, beta, lam, inv_n)
                rec += 1
            if delta <= tol:
                break
    return sweeps, False, rec
