"""Concrete problem instances: nonnegative PCA and a sparse feedforward classifier.

Nonnegative PCA maximizes (1/2) E_z[(z^T x)^2] over the nonnegative unit
ball.  Negated into composite-minimization form, the smooth part has
per-sample objective f(x; z) = -(z^T x)^2 / 2 and gradient -(z^T x) z; each
sample function is 1-smooth because samples are unit vectors, so L = 1.

The classifier is a 3-layer fully-connected network, tanh activations,
softmax + cross-entropy loss on the output, with an l1 penalty on all weight
matrices supplied by the regularizer.  Gradients are hand-derived backprop,
verified against central finite differences in the tests; there is no
autodiff anywhere.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .core import SmoothOracle, as_point
from .errors import InputError, ParameterError

_UNIT_NORM_TOL = 1e-9


def npca_sample_gradient(x, z):
    """Per-sample gradient -(z^T x) z; z must be a unit vector."""
    x = as_point(x)
    z = as_point(z)
    nz = float(np.linalg.norm(z))
    if abs(nz - 1.0) > _UNIT_NORM_TOL:
        raise InputError(f"sample must have unit norm, got {nz}")
    return -(z @ x) * z


def npca_generate_sample(rng, n):
    """One sample z = w/||w|| with w ~ N(1, I)."""
    if n < 1:
        raise ParameterError(f"dimension must be positive, got {n}")
    while True:
        w = rng.standard_normal(n) + 1.0
        nw = np.linalg.norm(w)
        if nw > 0.0:
            return w / nw


def _generate_batch(rng, m, n):
    w = rng.standard_normal((m, n))
    w += 1.0
    if kernels.normalize_rows_inplace(w):  # probability-zero redraw
        norms = np.linalg.norm(w, axis=1)
        for i in np.nonzero(norms == 0.0)[0]:
            w[i] = npca_generate_sample(rng, n)
    return w


def npca_dataset(rng, n_samples, dim):
    """Matrix of n_samples unit rows from the same generator (finite-sum data)."""
    return _generate_batch(rng, n_samples, dim)


def npca_initial_point(n):
    """Normalized all-ones vector: feasible, nonzero overlap with the dominant direction."""
    return np.full(n, 1.0 / np.sqrt(n))


class NpcaStream(SmoothOracle):
    """Streaming oracle: every draw is a fresh batch of generated unit samples.

    The exact gradient and objective are not available; ``full_gradient`` and
    ``objective`` are Monte-Carlo estimates over ``eval_samples`` fresh draws
    from a dedicated evaluation stream, and the count must be supplied
    explicitly.  Read-only after construction.
    """

    smoothness_estimate = 1.0

    def __init__(self, dim, eval_samples=None, eval_seed=0):
        if dim < 1:
            raise ParameterError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.eval_samples = eval_samples
        self.eval_seed = eval_seed
        self.n_samples = None

    def draw(self, rng, m):
        return _generate_batch(rng, m, self.dim)

    def sample_gradient(self, x, draws):
        return kernels.neg_corr_grad(draws, np.asarray(x, dtype=np.float64))

    def sample_gradient_pair(self, x_new, x_old, draws):
        return kernels.neg_corr_grad_pair(
            draws, np.asarray(x_new, dtype=np.float64), np.asarray(x_old, dtype=np.float64)
        )

    def _eval_matrix(self):
        if self.eval_samples is None:
            raise ParameterError(
                "exact statistics of a streaming oracle need an explicit "
                "eval_samples count; none was configured"
            )
        return _generate_batch(np.random.default_rng(self.eval_seed), self.eval_samples, self.dim)

    def full_gradient(self, x):
        Z = self._eval_matrix()
        return kernels.neg_corr_grad(Z, as_point(x))

    def objective(self, x):
        Z = self._eval_matrix()
        c = Z @ as_point(x)
        return -0.5 * float(c @ c) / Z.shape[0]


class NpcaFiniteSum(SmoothOracle):
    """Finite-sum oracle over stored unit-norm samples (dense or CSR rows)."""

    smoothness_estimate = 1.0

    def __init__(self, samples):
        if sp.issparse(samples):
            Z = samples.tocsr().astype(np.float64)
            norms = np.sqrt(np.asarray(Z.multiply(Z).sum(axis=1)).ravel())
        else:
            Z = np.ascontiguousarray(samples, dtype=np.float64)
            if Z.ndim != 2:
                raise InputError(f"expected a 2-D sample matrix, got shape {Z.shape}")
            norms = np.linalg.norm(Z, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise InputError(f"sample rows must be unit-norm; row {worst} has norm {norms[worst]}")
        self.Z = Z
        self.n_samples, self.dim = Z.shape
        self._sparse = sp.issparse(Z)

    def draw(self, rng, m):
        return rng.integers(0, self.n_samples, size=m)

    def _avg_gradient(self, x, rows):
        if self._sparse:
            c = rows @ x
            return -np.asarray(rows.T @ c).ravel() / rows.shape[0]
        return kernels.neg_corr_grad(rows, x)

    def sample_gradient(self, x, draws):
        rows = self.Z[draws]
        if not self._sparse:
            rows = np.ascontiguousarray(rows)
        return self._avg_gradient(np.asarray(x, dtype=np.float64), rows)

    def sample_gradient_pair(self, x_new, x_old, draws):
        rows = self.Z[draws]
        x_new = np.asarray(x_new, dtype=np.float64)
        x_old = np.asarray(x_old, dtype=np.float64)
        if self._sparse:
            return self._avg_gradient(x_new, rows), self._avg_gradient(x_old, rows)
        rows = np.ascontiguousarray(rows)
        return kernels.neg_corr_grad_pair(rows, x_new, x_old)

    def full_gradient(self, x):
        return self._avg_gradient(np.asarray(x, dtype=np.float64), self.Z)

    def objective(self, x):
        c = self.Z @ np.asarray(x, dtype=np.float64)
        if self._sparse:
            c = np.asarray(c).ravel()
        return -0.5 * float(c @ c) / self.n_samples

    def objective_and_gradient(self, x):
        """F and its exact gradient from one shared pass over the samples."""
        x = np.asarray(x, dtype=np.float64)
        c = self.Z @ x
        if self._sparse:
            c = np.asarray(c).ravel()
        obj = -0.5 * float(c @ c) / self.n_samples
        grad = -(self.Z.T @ c)
        if self._sparse:
            grad = np.asarray(grad).ravel()
        return obj, grad / self.n_samples


class FullBatchOracle(SmoothOracle):
    """Deterministic wrapper: every draw stands for the whole finite sum.

    Turns any finite-sum oracle into a noiseless one (sigma = 0); a draw
    consumes no randomness and accounts for n_samples realizations.
    """

    _FULL = object()

    def __init__(self, base):
        if getattr(base, "n_samples", None) is None:
            raise ParameterError("full-batch wrapping needs a finite-sum oracle")
        self.base = base
        self.dim = base.dim
        self.n_samples = base.n_samples
        self.smoothness_estimate = base.smoothness_estimate

    def draw(self, rng, m):
        return self._FULL

    def batch_size(self, draws):
        return self.n_samples

    def sample_gradient(self, x, draws):
        return self.base.full_gradient(x)

    def full_gradient(self, x):
        return self.base.full_gradient(x)

    def objective(self, x):
        return self.base.objective(x)

    def objective_and_gradient(self, x):
        if hasattr(self.base, "objective_and_gradient"):
            return self.base.objective_and_gradient(x)
        return self.base.objective(x), self.base.full_gradient(x)


def _softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def mlp_param_count(dims):
    d0, d1, d2, c = dims
    return d0 * d1 + d1 * d2 + d2 * c


def mlp_init(dims, rng):
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, flattened."""
    d0, d1, d2, c = dims
    parts = []
    for rows, cols in ((d1, d0), (d2, d1), (c, d2)):
        bound = 1.0 / np.sqrt(cols)
        parts.append(rng.uniform(-bound, bound, size=(rows, cols)).ravel())
    return np.concatenate(parts)


class SparseMlp(SmoothOracle):
    """Smooth part of the l1-regularized 3-layer tanh classifier (finite sum).

    The parameter vector flattens (W1, W2, W3) in order, W1: (d1, d0),
    W2: (d2, d1), W3: (c, d2).  Labels are 1-based class indices in {1..c}.
    Batch gradients accumulate in a fixed order, so evaluation is reproducible.
    """

    def __init__(self, X, y, dims, smoothness_estimate=1.0):
        d0, d1, d2, c = dims
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[1] != d0:
            raise InputError(f"features must be (N, {d0}), got {X.shape}")
        if len(y) != len(X):
            raise InputError("label count must equal the sample count")
        if not np.issubdtype(y.dtype, np.integer) or y.min() < 1 or y.max() > c:
            raise InputError(f"labels must be integers in 1..{c}")
        self.X = X
        self.y = y.astype(np.int64)
        self.dims = tuple(int(d) for d in dims)
        self.dim = mlp_param_count(dims)
        self.n_samples = len(X)
        self.smoothness_estimate = float(smoothness_estimate)
        self._splits = (d0 * d1, d0 * d1 + d1 * d2)

    def unpack(self, theta):
        d0, d1, d2, c = self.dims
        s1, s2 = self._splits
        w1 = theta[:s1].reshape(d1, d0)
        w2 = theta[s1:s2].reshape(d2, d1)
        w3 = theta[s2:].reshape(c, d2)
        return w1, w2, w3

    def forward(self, theta, x):
        """Class probabilities for one input (1-D) or a batch (2-D)."""
        single = np.ndim(x) == 1
        xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
        w1, w2, w3 = self.unpack(np.asarray(theta, dtype=np.float64))
        h1 = np.tanh(xb @ w1.T)
        h2 = np.tanh(h1 @ w2.T)
        probs = _softmax_rows(h2 @ w3.T)
        return probs[0] if single else probs

    def _batch_loss_grad(self, theta, xb, yb, want_grad=True):
        w1, w2, w3 = self.unpack(theta)
        h1 = np.tanh(xb @ w1.T)
        h2 = np.tanh(h1 @ w2.T)
        logits = h2 @ w3.T
        b = len(xb)
        rows = np.arange(b)
        # cross entropy straight from the logits: log-sum-exp minus the
        # true-class logit stays finite even where probabilities underflow
        shifted = logits - logits.max(axis=1, keepdims=True)
        sumexp = np.exp(shifted).sum(axis=1)
        loss = float((np.log(sumexp) - shifted[rows, yb - 1]).mean())
        if not want_grad:
            return loss, None
        probs = np.exp(shifted)
        probs /= sumexp[:, None]
        delta3 = probs
        delta3[rows, yb - 1] -= 1.0
        delta3 /= b
        g3 = delta3.T @ h2
        delta2 = (delta3 @ w3) * (1.0 - h2 * h2)
        g2 = delta2.T @ h1
        delta1 = (delta2 @ w2) * (1.0 - h1 * h1)
        g1 = delta1.T @ xb
        return loss, np.concatenate((g1.ravel(), g2.ravel(), g3.ravel()))

    def draw(self, rng, m):
        return rng.integers(0, self.n_samples, size=m)

    def sample_gradient(self, theta, draws):
        theta = np.asarray(theta, dtype=np.float64)
        _, g = self._batch_loss_grad(theta, self.X[draws], self.y[draws])
        return g

    def full_gradient(self, theta):
        _, g = self._batch_loss_grad(np.asarray(theta, dtype=np.float64), self.X, self.y)
        return g

    def objective(self, theta):
        loss, _ = self._batch_loss_grad(
            np.asarray(theta, dtype=np.float64), self.X, self.y, want_grad=False
        )
        return loss

    def objective_and_gradient(self, theta):
        """Training loss and its exact gradient from one forward/backward pass."""
        return self._batch_loss_grad(np.asarray(theta, dtype=np.float64), self.X, self.y)


@dataclass(frozen=True)
class ReferenceSolution:
    x: np.ndarray
    objective: float


def reference_solution(problem, x0, iters, eta):
    """Run the deterministic prox-gradient method from x0 and report the final objective.

    Needs exact full gradients, i.e. a finite-sum oracle; the result serves as
    the reference value for objective-error curves.
    """
    if getattr(problem.smooth, "n_samples", None) is None:
        raise ParameterError("the reference solver needs a finite-sum oracle")
    if iters < 0:
        raise ParameterError(f"iters must be nonnegative, got {iters}")
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    x = as_point(x0)
    for _ in range(iters):
        x = problem.reg.mirror_prox_solve(x, problem.smooth.full_gradient(x), eta)
    return ReferenceSolution(x=x, objective=problem.objective(x))


def density_pct(theta):
    """Percentage of exactly nonzero entries, in [0, 100]."""
    theta = np.asarray(theta)
    return 100.0 * np.count_nonzero(theta) / theta.size
