"""Composite problems and the proximal gradient mapping.

A composite problem is ``min_x F(x) + r(x)`` where the smooth part
``F(x) = E[f(x; xi)]`` is reachable only through sampled gradients and ``r``
is closed convex with an inexpensive regularized-linearization solve.  Points
are plain 1-D float64 numpy arrays.

The central quantity is the proximal gradient mapping

    P(x, d, eta) = (x - x+) / eta,
    x+ = argmin_y <d, y> + V(y, x)/eta + r(y),

whose norm at ``d = grad F(x)`` measures how far ``x`` is from stationarity.
The subproblem solve is owned by the regularizer (``mirror_prox_solve``), so
each shipped (geometry, regularizer) pair provides it in closed form; all
shipped instances are Euclidean, where ``V(y, x) = ||y - x||^2 / 2``.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError


def as_point(x):
    """Coerce to a 1-D float64 array, requiring finite entries."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"expected a 1-D point, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("point has non-finite entries")
    return x


class SmoothOracle(ABC):
    """Sampled-gradient access to the smooth part F.

    ``draw(rng, m)`` produces one minibatch of m i.i.d. realizations (sample
    indices for finite sums, raw sample vectors for streaming oracles).
    ``sample_gradient`` averages per-sample gradients over such a draw, and may
    be called at several points with the *same* draw: that is the shared-draw
    evaluation the variance-reduced estimators rely on.
    """

    dim: int
    smoothness_estimate: float

    @abstractmethod
    def draw(self, rng, m):
        """Return a batch of m i.i.d. sample realizations drawn from ``rng``."""

    @abstractmethod
    def sample_gradient(self, x, draws):
        """Average gradient of f(., xi) at x over the given draws."""

    @abstractmethod
    def full_gradient(self, x):
        """Gradient of F at x (exact for finite sums, Monte-Carlo for streams)."""

    @abstractmethod
    def objective(self, x):
        """Value of F at x (same exactness caveat as full_gradient)."""

    def sample_gradient_pair(self, x_new, x_old, draws):
        """Gradients at two points from the same draws (shared-draw evaluation)."""
        return self.sample_gradient(x_new, draws), self.sample_gradient(x_old, draws)

    def batch_size(self, draws):
        """Number of sample realizations a draw accounts for."""
        return len(draws)


class Regularizer(ABC):
    """Closed convex regularizer with a closed-form regularized-linearization solve."""

    @abstractmethod
    def value(self, x):
        """r(x); may be +inf outside the domain."""

    @abstractmethod
    def mirror_prox_solve(self, x, d, eta):
        """argmin_y <d, y> + ||y - x||^2 / (2 eta) + r(y) under Euclidean geometry."""


@dataclass(frozen=True)
class CompositeProblem:
    smooth: SmoothOracle
    reg: Regularizer

    @property
    def dim(self):
        return self.smooth.dim

    def objective(self, x):
        """Full objective F(x) + r(x)."""
        return self.smooth.objective(x) + self.reg.value(x)


def gradient_mapping(problem, x, d, eta):
    """Proximal gradient mapping (x - x+)/eta with x+ the regularized prox point."""
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    d = np.asarray(d, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InputError("direction d has non-finite entries")
    x_plus = problem.reg.mirror_prox_solve(x, d, eta)
    return (x - x_plus) / eta


def stationarity_violation(problem, x, eta=1.0):
    """Norm of the gradient mapping at the exact (or declared-estimate) gradient.

    eta defaults to 1 so runs with different stepsizes are measured on the
    same scale.
    """
    g = gradient_mapping(problem, x, problem.smooth.full_gradient(x), eta)
    return float(np.linalg.norm(g))
