"""Shared helpers: independent brute-force oracles and instrumented wrappers.

The oracles here deliberately avoid the code paths they check: prox outputs
are verified by grid search and by the subproblem's first-order condition,
gradients by central finite differences.
"""

import numpy as np

from pstorm.problems import NpcaFiniteSum, npca_dataset


def make_npca_finite(seed, n_samples, dim):
    rng = np.random.default_rng(seed)
    return NpcaFiniteSum(npca_dataset(rng, n_samples, dim))


def scalar_prox_l1_grid(x, d, eta, lam, resolution=1e-6):
    """Brute-force argmin of d*y + (y-x)^2/(2 eta) + lam*|y| on a shrinking grid.

    Coarse-to-fine passes end at the requested resolution; the minimizer lies
    between 0 and z = x - eta*d, so the initial bracket covers that with slack.
    """
    z = x - eta * d
    lo, hi = min(0.0, z) - 0.5, max(0.0, z) + 0.5
    best = None
    for step in (1e-2, 1e-4, resolution):
        ys = np.arange(lo, hi + step, step)
        vals = d * ys + (ys - x) ** 2 / (2.0 * eta) + lam * np.abs(ys)
        i = int(np.argmin(vals))
        best = ys[i]
        lo, hi = ys[max(i - 2, 0)], ys[min(i + 2, len(ys) - 1)]
    return best


def sample_nonneg_ball(rng, n):
    """Uniform-ish feasible point of {y >= 0, ||y|| <= 1}."""
    u = np.abs(rng.standard_normal(n))
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return u
    radius = rng.random() ** (1.0 / n)
    return u / norm * radius


def projection_optimality_gap(z, p, ys):
    """max over probes y of <z - p, y - p>; nonpositive iff p projects z onto the set."""
    return max(float((z - p) @ (y - p)) for y in ys)


def prox_first_order_gap(reg, x, d, eta, y):
    """<d + (y* - x)/eta, y - y*> + r(y) - r(y*) for y* = the solve; >= 0 at an exact solve."""
    y_star = reg.mirror_prox_solve(x, d, eta)
    lin = float((d + (y_star - x) / eta) @ (y - y_star))
    return lin + reg.value(y) - reg.value(y_star)


def central_difference(f, x, idx, h=1e-5):
    """Central finite-difference approximation of df/dx_idx."""
    xp = x.copy()
    xp[idx] += h
    xm = x.copy()
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


class InstrumentedOracle:
    """Delegating wrapper that records every (draw-id, point) gradient evaluation."""

    def __init__(self, base):
        self.base = base
        self.dim = base.dim
        self.n_samples = getattr(base, "n_samples", None)
        self.smoothness_estimate = base.smoothness_estimate
        self.calls = []
        self.draws_made = []

    def draw(self, rng, m):
        draws = self.base.draw(rng, m)
        self.draws_made.append(draws)
        return draws

    def batch_size(self, draws):
        return self.base.batch_size(draws)

    def sample_gradient(self, x, draws):
        g = self.base.sample_gradient(x, draws)
        self.calls.append((id(draws), x.copy(), g.copy()))
        return g

    def sample_gradient_pair(self, x_new, x_old, draws):
        v, u = self.base.sample_gradient_pair(x_new, x_old, draws)
        self.calls.append((id(draws), x_new.copy(), v.copy()))
        self.calls.append((id(draws), x_old.copy(), u.copy()))
        return v, u

    def full_gradient(self, x):
        return self.base.full_gradient(x)

    def objective(self, x):
        return self.base.objective(x)
