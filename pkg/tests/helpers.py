"""Shared test machinery: multiplier sampling and vectorized form evaluation."""

import numpy as np

from qcert import NONNEG


def draw_multipliers(pm, rng, n, scale=1.0):
    """(n_terms, n) multiplier draws respecting each variable's cone."""
    theta = rng.normal(0.0, scale, size=(len(pm.terms), n))
    for j, (var_id, _) in enumerate(pm.terms):
        if pm.cones[var_id] == NONNEG:
            theta[j] = np.abs(theta[j])
    return theta


def assignment_from(pm, theta_col):
    return {var_id: float(theta_col[j]) for j, (var_id, _) in enumerate(pm.terms)}


def family_form_min(pm, U, theta, chunk=10000):
    """min over points u (rows of U) and columns of theta of u' M(theta) u.

    Vectorized: per-basis quadratic values once per chunk, then one matmul
    against the multiplier block.  Memory stays at chunk x n_assignments.
    """
    worst = np.inf
    for lo in range(0, len(U), chunk):
        Uc = U[lo:lo + chunk]
        const = np.einsum("ij,jk,ik->i", Uc, pm.constant, Uc)
        if pm.terms:
            vals = np.stack(
                [np.einsum("ij,jk,ik->i", Uc, B, Uc) for _, B in pm.terms],
                axis=1,
            )
            forms = vals @ theta + const[:, None]
        else:
            forms = const[:, None]
        worst = min(worst, float(forms.min()))
    return worst


def lift(X):
    """Append the homogenizing 1 to each row."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((len(X), 1))])
