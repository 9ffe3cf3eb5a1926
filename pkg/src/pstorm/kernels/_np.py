"""Pure-numpy implementations of the hot kernels."""

import numpy as np


def soft_threshold(z, t):
    """Componentwise sign(z) * max(|z| - t, 0); entries with |z| <= t are exact zeros."""
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def project_nonneg_ball(z):
    """Project onto {x : x >= 0, ||x|| <= 1}: clip negatives, rescale if outside the ball.

    Inputs whose clipped norm lands within one part in 1e14 of the boundary are
    left unscaled so that the projection is bit-exactly idempotent.
    """
    p = np.maximum(z, 0.0)
    s = float(p @ p)
    if s > 1.0 + 1e-14:
        p = p / np.sqrt(s)
    return p


def neg_corr_grad(batch, x):
    """Average gradient -batch^T (batch x) / m of the negated correlation objective."""
    m = batch.shape[0]
    return -(batch.T @ (batch @ x)) / m


def neg_corr_grad_pair(batch, x_new, x_old):
    """Gradients at two points from the same sample batch (shared draws)."""
    m = batch.shape[0]
    v = -(batch.T @ (batch @ x_new)) / m
    u = -(batch.T @ (batch @ x_old)) / m
    return v, u


def momentum_update(v, u, d, beta):
    """Estimator recursion v + (1 - beta) * (d - u)."""
    return v + (1.0 - beta) * (d - u)


def normalize_rows_inplace(w):
    """Scale each row of w to unit norm in place; returns the number of zero rows."""
    s = np.einsum("ij,ij->i", w, w)
    zero = int(np.count_nonzero(s == 0.0))
    if zero:
        s[s == 0.0] = 1.0
    w /= np.sqrt(s)[:, None]
    return zero
