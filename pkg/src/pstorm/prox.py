"""Shipped regularizers and their closed-form solves (Euclidean geometry)."""

import numpy as np

from . import kernels
from .core import Regularizer, as_point
from .errors import ParameterError

# slack for membership tests on indicator domains; prox outputs and convex
# combinations of feasible points may overshoot the boundary by rounding
_NORM_SQ_TOL = 1e-12


def soft_threshold(x, d, eta, lam):
    """Solve the l1-regularized linearization: sign(z) * max(|z| - eta*lam, 0), z = x - eta*d.

    Thresholded entries are stored as exact zeros (the density metric counts
    nonzeros bit-wise).
    """
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    z = as_point(np.asarray(x, dtype=np.float64) - eta * np.asarray(d, dtype=np.float64))
    return kernels.soft_threshold(z, eta * lam)


def project_nonneg_ball(z):
    """Euclidean projection onto the unit ball intersected with the nonnegative orthant."""
    return kernels.project_nonneg_ball(as_point(z))


class ZeroRegularizer(Regularizer):
    """r = 0; the solve is a plain gradient step."""

    def value(self, x):
        return 0.0

    def mirror_prox_solve(self, x, d, eta):
        if eta <= 0:
            raise ParameterError(f"eta must be positive, got {eta}")
        return as_point(x - eta * np.asarray(d, dtype=np.float64))


class L1Regularizer(Regularizer):
    """r(x) = lam * ||x||_1."""

    def __init__(self, lam):
        if lam < 0:
            raise ParameterError(f"lambda must be nonnegative, got {lam}")
        self.lam = float(lam)

    def value(self, x):
        return self.lam * float(np.sum(np.abs(x)))

    def mirror_prox_solve(self, x, d, eta):
        if eta <= 0:
            raise ParameterError(f"eta must be positive, got {eta}")
        z = np.asarray(x, dtype=np.float64) - eta * np.asarray(d, dtype=np.float64)
        return kernels.soft_threshold(z, eta * self.lam)


class NonnegBallIndicator(Regularizer):
    """Indicator of {x : ||x|| <= 1, x >= 0}."""

    def value(self, x):
        x = np.asarray(x)
        if np.all(x >= 0.0) and float(x @ x) <= 1.0 + _NORM_SQ_TOL:
            return 0.0
        return np.inf

    def mirror_prox_solve(self, x, d, eta):
        if eta <= 0:
            raise ParameterError(f"eta must be positive, got {eta}")
        z = np.asarray(x, dtype=np.float64) - eta * np.asarray(d, dtype=np.float64)
        return kernels.project_nonneg_ball(z)
