"""The four optimizers as pure step functions over explicit state, plus the run driver.

All methods minimize a composite objective F(x) + r(x) through the same cycle:
build a gradient estimator from sampled gradients, then take a regularized
linearized step ``x+ = argmin <est, y> + ||y - x||^2/(2 eta) + r(y)``.  They
differ only in the estimator:

    momentum VR (pstorm):  d_{k+1} = v_{k+1} + (1 - beta_k)(d_k - u_{k+1}),
                           v, u sampled at x_{k+1}, x_k with the SAME draws
    proximal SGD:          fresh minibatch gradient at x_k every step
    spiderboost:           periodic big-batch restart, shared-draw correction
                           v_k = avg[grad f(x_k) - grad f(x_{k-1})] + v_{k-1}
    hybrid SGD:            convex mix of a recursive corrected term and a
                           fresh unbiased gradient, from two independent
                           batches, followed by iterate averaging

Every ingredient of a trajectory is drawn from the state's own rng stream, so
identical (seed, config) reproduce trajectories bit for bit.  Sample
accounting counts each drawn realization once, even when two gradients are
evaluated on it; hybrid SGD draws two distinct batches per step and therefore
counts 2m.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import as_point
from .errors import InputError, ParameterError, ScheduleInfeasibleError
from .schedules import selection_weights


@dataclass
class OptimizerState:
    """Iterate, gradient estimator, and bookkeeping for one trajectory.

    ``d`` is the current gradient estimator (None for methods that rebuild it
    each step); ``x_prev`` is kept only by the estimators whose recursion
    reaches back one iterate.
    """

    x: np.ndarray
    rng: np.random.Generator
    d: np.ndarray | None = None
    k: int = 0
    samples_consumed: int = 0
    x_prev: np.ndarray | None = None


def _estimator_init(problem, x0, m0, rng):
    if m0 < 1:
        raise ParameterError(f"m0 must be a positive integer, got {m0}")
    x0 = as_point(x0)
    n = getattr(problem.smooth, "n_samples", None)
    if n is not None and m0 >= n:
        # an initial batch covering a finite sum is one exact full pass
        d0 = problem.smooth.full_gradient(x0)
        cost = n
    else:
        draws = problem.smooth.draw(rng, m0)
        d0 = problem.smooth.sample_gradient(x0, draws)
        cost = problem.smooth.batch_size(draws)
    return OptimizerState(x=x0, rng=rng, d=d0, samples_consumed=cost)


def pstorm_init(problem, x0, m0, rng):
    """Initial state with d0 = average of m0 sample gradients at x0."""
    return _estimator_init(problem, x0, m0, rng)


def pstorm_step(state, problem, schedule, m):
    """One momentum variance-reduced step.

    x_{k+1} solves the regularized linearization at (x_k, d_k, eta_k); one
    fresh batch of m draws evaluates v at x_{k+1} and u at x_k (shared draws),
    and the estimator recursion d_{k+1} = v + (1 - beta_k)(d_k - u) closes the
    step.  beta_k = 1 degenerates to proximal SGD.
    """
    k = state.k
    eta_k = schedule.eta_at(k)
    beta_k = schedule.beta_at(k)
    if not 0.0 < beta_k <= 1.0:
        raise ScheduleInfeasibleError(f"beta_{k} = {beta_k} is outside (0, 1]")
    x_new = problem.reg.mirror_prox_solve(state.x, state.d, eta_k)
    draws = problem.smooth.draw(state.rng, m)
    v, u = problem.smooth.sample_gradient_pair(x_new, state.x, draws)
    d_new = kernels.momentum_update(v, u, state.d, beta_k)
    return OptimizerState(
        x=x_new,
        rng=state.rng,
        d=d_new,
        k=k + 1,
        samples_consumed=state.samples_consumed + problem.smooth.batch_size(draws),
    )


def proxsgd_step(state, problem, eta_k, m):
    """Vanilla proximal SGD step: fresh m-sample gradient at x_k, then the prox step."""
    if eta_k < 0:
        raise ParameterError(f"eta must be nonnegative, got {eta_k}")
    draws = problem.smooth.draw(state.rng, m)
    g = problem.smooth.sample_gradient(state.x, draws)
    x_new = state.x.copy() if eta_k == 0.0 else problem.reg.mirror_prox_solve(state.x, g, eta_k)
    return OptimizerState(
        x=x_new,
        rng=state.rng,
        d=None,
        k=state.k + 1,
        samples_consumed=state.samples_consumed + problem.smooth.batch_size(draws),
    )


def spiderboost_step(state, problem, eta, q, big_batch, small_batch):
    """One spiderboost step with period-q estimator restarts.

    At k = 0 mod q the estimator is rebuilt from big_batch draws (the exact
    full gradient when the oracle is a finite sum and big_batch covers it);
    otherwise it accumulates the shared-draw correction from small_batch
    draws.  The prox step uses the constant stepsize eta.
    """
    if q < 1:
        raise ParameterError(f"q must be a positive integer, got {q}")
    if big_batch < 1 or small_batch < 1:
        raise ParameterError("spiderboost batch sizes must be positive")
    k = state.k
    oracle = problem.smooth
    n = getattr(oracle, "n_samples", None)
    if k % q == 0:
        if n is not None and big_batch >= n:
            v = oracle.full_gradient(state.x)
            cost = n
        else:
            draws = oracle.draw(state.rng, big_batch)
            v = oracle.sample_gradient(state.x, draws)
            cost = oracle.batch_size(draws)
    else:
        draws = oracle.draw(state.rng, small_batch)
        g_new, g_old = oracle.sample_gradient_pair(state.x, state.x_prev, draws)
        v = kernels.momentum_update(g_new, g_old, state.d, 0.0)
        cost = oracle.batch_size(draws)
    x_new = problem.reg.mirror_prox_solve(state.x, v, eta)
    return OptimizerState(
        x=x_new,
        rng=state.rng,
        d=v,
        k=k + 1,
        samples_consumed=state.samples_consumed + cost,
        x_prev=state.x,
    )


def hybrid_sgd_init(problem, x0, m0, rng):
    """Initial state with the estimator set to an m0-sample gradient at x0."""
    return _estimator_init(problem, x0, m0, rng)


def hybrid_sgd_step(state, problem, gamma, beta, eta, m, share_batches=False):
    """One hybrid-SGD step: prox + iterate averaging, then the two-batch estimator update.

    x_hat solves the regularized linearization at (x_k, v_k, eta) and
    x_{k+1} = (1 - gamma) x_k + gamma x_hat.  Two independent m-sample batches
    then update the estimator:

        v_{k+1} = beta [v_k + (grad at x_{k+1}) - (grad at x_k)]   (shared xi-batch)
                  + (1 - beta) (fresh grad at x_{k+1})             (zeta-batch)

    ``share_batches`` forces the zeta-batch equal to the xi-batch (a testing
    hook for the degenerate single-batch estimator); only then are m rather
    than 2m samples counted.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma must be in (0, 1], got {gamma}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must be in [0, 1], got {beta}")
    oracle = problem.smooth
    x_hat = problem.reg.mirror_prox_solve(state.x, state.d, eta)
    x_new = (1.0 - gamma) * state.x + gamma * x_hat
    if not math.isfinite(problem.reg.value(x_new)):
        # the convex combination can overshoot an indicator domain only by
        # rounding; re-project within 1e-12, otherwise it is a real error
        x_proj = problem.reg.mirror_prox_solve(x_new, np.zeros_like(x_new), 1.0)
        if float(np.linalg.norm(x_proj - x_new)) > 1e-12:
            raise InputError("averaged iterate left the regularizer domain")
        x_new = x_proj

    draws_xi = oracle.draw(state.rng, m)
    if share_batches:
        draws_zeta = draws_xi
        cost = oracle.batch_size(draws_xi)
    else:
        draws_zeta = oracle.draw(state.rng, m)
        cost = oracle.batch_size(draws_xi) + oracle.batch_size(draws_zeta)
    g_new, g_old = oracle.sample_gradient_pair(x_new, state.x, draws_xi)
    corrected = kernels.momentum_update(g_new, g_old, state.d, 0.0)
    v_new = beta * corrected + (1.0 - beta) * oracle.sample_gradient(x_new, draws_zeta)
    return OptimizerState(
        x=x_new,
        rng=state.rng,
        d=v_new,
        k=state.k + 1,
        samples_consumed=state.samples_consumed + cost,
    )


def hybrid_sgd_params(c0, c1, m, K, L, m0_floor=None, fixed_gamma=None):
    """Constant hybrid-SGD parameters (gamma, beta, eta, m0) from the tuning constants.

        m0    = c1^2 * ceil(m / (K+1)^(1/3))   (= c1^2 for ordinary minibatches),
                raised to m0_floor when given
        gamma = 3 c0 m^(3/4) / (sqrt(13) m0 (K+1)^(1/4)),  or fixed_gamma verbatim
        beta  = 1 - sqrt(m) / sqrt(m0 K)
        eta   = 2 / (L (3 + gamma))

    The finite-sum variant fixes gamma (0.95 in the reference experiments) and
    floors m0 at the dataset size, which makes the initialization one exact
    full pass.
    """
    if min(c0, c1, m, K, L) <= 0:
        raise ParameterError("all hybrid-SGD parameter inputs must be positive")
    m0 = int(c1 * c1 * math.ceil(m / (K + 1.0) ** (1.0 / 3.0)))
    if m0_floor is not None:
        m0 = max(m0, int(m0_floor))
    m0 = max(m0, 1)
    if fixed_gamma is not None:
        gamma = float(fixed_gamma)
    else:
        gamma = 3.0 * c0 * m ** 0.75 / (math.sqrt(13.0) * m0 * (K + 1.0) ** 0.25)
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"hybrid-SGD gamma evaluates to {gamma}, outside (0, 1]")
    beta = 1.0 - math.sqrt(m) / math.sqrt(m0 * K)
    eta = 2.0 / (L * (3.0 + gamma))
    return gamma, beta, eta, m0


@dataclass(frozen=True)
class PStormConfig:
    schedule: object
    m: int
    m0: int


@dataclass(frozen=True)
class ProxSgdConfig:
    """Stepsize law eta0 / sqrt(k+1)."""

    eta0: float
    m: int

    def eta_at(self, k):
        return self.eta0 / math.sqrt(k + 1.0)


@dataclass(frozen=True)
class SpiderboostConfig:
    eta: float
    q: int
    big_batch: int
    small_batch: int


@dataclass(frozen=True)
class HybridSgdConfig:
    gamma: float
    beta: float
    eta: float
    m: int
    m0: int


@dataclass
class RunResult:
    selected_x: np.ndarray
    final_x: np.ndarray
    tau: int
    samples_consumed: int
    rows: list = field(default_factory=list)


def _init_state(problem, method, x0, rng):
    if isinstance(method, PStormConfig):
        return pstorm_init(problem, x0, method.m0, rng)
    if isinstance(method, HybridSgdConfig):
        return hybrid_sgd_init(problem, x0, method.m0, rng)
    return OptimizerState(x=as_point(x0), rng=rng)


def _step(state, problem, method):
    if isinstance(method, PStormConfig):
        return pstorm_step(state, problem, method.schedule, method.m)
    if isinstance(method, ProxSgdConfig):
        return proxsgd_step(state, problem, method.eta_at(state.k), method.m)
    if isinstance(method, SpiderboostConfig):
        return spiderboost_step(
            state, problem, method.eta, method.q, method.big_batch, method.small_batch
        )
    if isinstance(method, HybridSgdConfig):
        return hybrid_sgd_step(
            state, problem, method.gamma, method.beta, method.eta, method.m
        )
    raise ParameterError(f"unknown method config {type(method).__name__}")


def run(
    problem,
    method,
    K,
    x0,
    rng,
    output_rule="uniform",
    epoch_samples=None,
    metrics_fn=None,
):
    """Drive K steps of a method and select the output iterate.

    The output index tau is drawn from the state rng before the loop starts:
    uniformly over 0..K-1, by the schedule's selection weights (momentum-VR
    only), or fixed to K for rule 'last'.  When ``epoch_samples`` is set,
    ``metrics_fn(epoch, state)`` is invoked every time cumulative sample
    consumption crosses a multiple of it, and its results are collected into
    the returned rows.
    """
    if K < 0:
        raise ParameterError(f"K must be nonnegative, got {K}")
    if K == 0:
        x0 = as_point(x0)
        return RunResult(selected_x=x0.copy(), final_x=x0.copy(), tau=0, samples_consumed=0)
    state = _init_state(problem, method, x0, rng)
    if output_rule == "uniform":
        tau = int(rng.integers(K))
    elif output_rule == "weighted":
        if not isinstance(method, PStormConfig):
            raise ParameterError("weighted output selection requires the momentum-VR method")
        weights = selection_weights(method.schedule, K)
        tau = int(rng.choice(K, p=weights))
    elif output_rule == "last":
        tau = K
    else:
        raise ParameterError(f"unknown output rule {output_rule!r}")

    result = RunResult(selected_x=state.x.copy(), final_x=state.x.copy(), tau=tau, samples_consumed=0)
    epoch = 0
    for k in range(K):
        if k == tau:
            result.selected_x = state.x.copy()
        state = _step(state, problem, method)
        if epoch_samples is not None:
            while state.samples_consumed >= (epoch + 1) * epoch_samples:
                epoch += 1
                if metrics_fn is not None:
                    result.rows.append(metrics_fn(epoch, state))
    if tau == K:
        result.selected_x = state.x.copy()
    result.final_x = state.x.copy()
    result.samples_consumed = state.samples_consumed
    return result
