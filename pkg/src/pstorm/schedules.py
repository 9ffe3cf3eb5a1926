"""Stepsize/momentum schedules and numerical feasibility validators.

Three parameter laws are shipped, each producing a stepsize sequence
``eta_k`` and a momentum weight sequence ``beta_k`` from a base stepsize
``eta``, a smoothness estimate ``L``, a minibatch size ``m``, and (for the
constant laws) a horizon ``K``:

    VARYING      eta_k = eta / (L (k+4)^(1/3)),
                 beta_k = (1 + 24 eta_k^2 L^2 - eta_{k+1}/eta_k) / (1 + 4 eta_k^2 L^2),
                 admissible for eta <= 4^(1/3)/8.

    CONSTANT_I   eta_k = eta / (L K^(1/3)),
                 beta_k = (4 eta^2/m + 10 eta^2 (2 - eta/K^(1/3))) / (K^(2/3) + 4 eta^2/m),
                 admissible for eta < K^(1/3)/5 (a warning is issued above
                 K^(1/3)/10, where the sharper complexity constants no longer
                 apply).

    CONSTANT_II  eta_k = eta / (L K^(1/3)),
                 beta_k = 3 [(k+3)^(1/3) - (k+2)^(1/3)],
                 admissible for eta <= 1/4.

Schedules are defined for every k >= 0 including k = K (the randomized output
selection references eta_{k+1} at k = K-1); the constant laws extend by the
same constant.

The validators re-check the analytical feasibility conditions numerically, in
double precision with 1e-12 slack, so user-supplied (eta, L, m) combinations
outside the admissible ranges are caught concretely rather than assumed.
"""

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ScheduleInfeasibleError

VALIDATOR_SLACK = 1e-12


class ScheduleKind(enum.Enum):
    VARYING = "varying"
    CONSTANT_I = "constant-i"
    CONSTANT_II = "constant-ii"


@dataclass(frozen=True)
class ScheduleSpec:
    """One of the three parameter laws, validated at construction.

    ``unchecked=True`` skips the admissible-range checks (positivity is still
    enforced); the harness uses it to honor an explicit force request, and the
    numerical validators below remain available to such specs.
    """

    kind: ScheduleKind
    eta: float
    L: float
    m: int = 1
    K: int | None = None
    unchecked: bool = False

    def __post_init__(self):
        if self.eta <= 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if self.L <= 0:
            raise ParameterError(f"L must be positive, got {self.L}")
        if self.m < 1:
            raise ParameterError(f"m must be a positive integer, got {self.m}")
        if self.kind is not ScheduleKind.VARYING and (self.K is None or self.K < 1):
            raise ParameterError("constant schedules require a positive horizon K")
        if self.unchecked:
            return
        if self.kind is ScheduleKind.VARYING:
            limit = 4.0 ** (1.0 / 3.0) / 8.0
            if self.eta > limit:
                raise ParameterError(
                    f"varying schedule requires eta <= 4^(1/3)/8 ~= {limit:.6f}, got {self.eta}"
                )
        elif self.kind is ScheduleKind.CONSTANT_I:
            limit = self.K ** (1.0 / 3.0) / 5.0
            if self.eta >= limit:
                raise ParameterError(
                    f"constant-i schedule requires eta < K^(1/3)/5 = {limit:.6f}, got {self.eta}"
                )
            if self.eta > self.K ** (1.0 / 3.0) / 10.0:
                warnings.warn(
                    "constant-i eta is above K^(1/3)/10; the schedule is feasible "
                    "but outside the range with clean complexity constants",
                    stacklevel=2,
                )
        elif self.eta > 0.25:
            raise ParameterError(
                f"constant-ii schedule requires eta <= 1/4, got {self.eta}"
            )

    def eta_at(self, k):
        """Stepsize at iteration k (defined for all k >= 0)."""
        if k < 0:
            raise ParameterError(f"k must be nonnegative, got {k}")
        if self.kind is ScheduleKind.VARYING:
            return self.eta / (self.L * (k + 4.0) ** (1.0 / 3.0))
        return self.eta / (self.L * self.K ** (1.0 / 3.0))

    def beta_at(self, k):
        """Momentum weight at iteration k; always in (0, 1) for a valid spec."""
        if k < 0:
            raise ParameterError(f"k must be nonnegative, got {k}")
        if self.kind is ScheduleKind.VARYING:
            ek = self.eta_at(k)
            ratio = self.eta_at(k + 1) / ek
            e2 = (ek * self.L) ** 2
            beta = (1.0 + 24.0 * e2 - ratio) / (1.0 + 4.0 * e2)
        elif self.kind is ScheduleKind.CONSTANT_I:
            e2 = self.eta * self.eta
            kr = self.K ** (1.0 / 3.0)
            beta = (4.0 * e2 / self.m + 10.0 * e2 * (2.0 - self.eta / kr)) / (
                self.K ** (2.0 / 3.0) + 4.0 * e2 / self.m
            )
        else:
            beta = 3.0 * ((k + 3.0) ** (1.0 / 3.0) - (k + 2.0) ** (1.0 / 3.0))
        if not 0.0 < beta < 1.0:
            raise ScheduleInfeasibleError(
                f"beta_{k} = {beta} is outside (0, 1); schedule invariants were bypassed"
            )
        return beta


@dataclass(frozen=True)
class ExplicitSchedule:
    """Ad-hoc schedule from scalars or callables; used by tests and baselines.

    Unlike ScheduleSpec, beta values are not restricted to (0, 1): beta = 1
    degenerates the momentum estimator to a plain stochastic gradient, which
    is a supported mode.
    """

    eta: object
    beta: object
    L: float = 1.0
    m: int = 1

    def eta_at(self, k):
        return self.eta(k) if callable(self.eta) else float(self.eta)

    def beta_at(self, k):
        return self.beta(k) if callable(self.beta) else float(self.beta)


def _etas(spec, upto):
    return np.array([spec.eta_at(k) for k in range(upto)])


def _betas(spec, upto):
    return np.array([spec.beta_at(k) for k in range(upto)])


def discount_products(spec, K=None):
    """Running discount products G_0..G_K with G_0 = 1, G_{k+1} = G_k (1-beta_k)^2."""
    if K is None:
        K = spec.K
    if K is None or K < 0:
        raise ParameterError("a nonnegative horizon K is required")
    out = np.empty(K + 1)
    out[0] = 1.0
    for k in range(K):
        b = spec.beta_at(k)
        out[k + 1] = out[k] * (1.0 - b) ** 2
    return out


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    first_violation: int | None
    detail: str


def validate_descent_condition(spec, K):
    """Check the two per-iteration inequalities behind the varying-stepsize analysis.

    For every k < K, with e_k = eta_k * L and r_k = eta_{k+1}/eta_k:

        (1/4)(1 - e_k) - (1 - beta_k)^2 / (5 m r_k)                        > 0
        (eta_k/2)(2 - e_k) - 1/(20 eta_k L^2)
            + (1 - beta_k)^2 (1 + 4 e_k^2 / m) / (20 eta_{k+1} L^2)       <= 0

    The first guarantees positive randomized-selection weights, the second
    that the gradient-error term is absorbed.  A False report is an answer,
    not an error.
    """
    if K < 1:
        raise ParameterError(f"K must be positive, got {K}")
    L, m = spec.L, spec.m
    eta = _etas(spec, K + 1)
    beta = _betas(spec, K)
    ek, ek1 = eta[:-1], eta[1:]
    one_minus_b2 = (1.0 - beta) ** 2
    lhs1 = 0.25 * (1.0 - ek * L) - (ek / (5.0 * m * ek1)) * one_minus_b2
    lhs2 = (
        0.5 * ek * (2.0 - ek * L)
        - 1.0 / (20.0 * ek * L * L)
        + one_minus_b2 * (1.0 + 4.0 * (ek * L) ** 2 / m) / (20.0 * ek1 * L * L)
    )
    bad = np.nonzero((lhs1 <= -VALIDATOR_SLACK) | (lhs2 > VALIDATOR_SLACK))[0]
    if bad.size:
        k = int(bad[0])
        which = "selection-weight positivity" if lhs1[k] <= -VALIDATOR_SLACK else "error-absorption"
        return ValidationReport(
            False, k, f"{which} inequality fails at k={k}: lhs1={lhs1[k]:.3e}, lhs2={lhs2[k]:.3e}"
        )
    return ValidationReport(True, None, f"both inequalities hold for k < {K}")


def _discounted_tail_sums(spec, K, values):
    """T_k = sum_{j=k+1}^{K-1} values_j * G_j / G_k, via the stable backward recursion
    T_k = (1-beta_k)^2 (values_{k+1} + T_{k+1})."""
    T = np.zeros(K)
    for k in range(K - 2, -1, -1):
        b = spec.beta_at(k)
        T[k] = (1.0 - b) ** 2 * (values[k + 1] + T[k + 1])
    return T


@dataclass(frozen=True)
class DiscountReport:
    ok: bool
    first_violation: int | None
    A: float
    B: float
    A_bound: float
    B_bound: float


def validate_discount_condition(spec):
    """Check the discounted-sum conditions of the constant-stepsize-II analysis.

    Verifies, for every k < K,

        2 eta_k L + (4 L^2 / m) (eta_k / G_k) sum_{j=k+1}^{K-1} eta_j G_j <= 1,

    and computes the realized constants

        A = sum_{k>=1} eta_k G_k,
        B = sum_{k>=1} eta_k G_k sum_{j<k} beta_j^2 / G_{j+1},

    which must stay below their closed-form bounds
    A <= (2^(-1/3) + 2^(1/3)/6 + 1/36) eta / (L K^(1/3)) and
    B <= 2 eta / ((1 - 2^(-2/3))^2 L).
    """
    if spec.kind is not ScheduleKind.CONSTANT_II:
        raise ParameterError("the discounted-sum validator applies to the constant-ii schedule")
    K, L, m = spec.K, spec.L, spec.m
    eta = _etas(spec, K + 1)
    # tail sums in ratio form: no Gamma under/overflow for large K
    T = _discounted_tail_sums(spec, K, eta)
    lhs = 2.0 * eta[:K] * L + (4.0 * L * L / m) * eta[:K] * T
    bad = np.nonzero(lhs > 1.0 + VALIDATOR_SLACK)[0]
    first = int(bad[0]) if bad.size else None

    A = T[0]
    beta = _betas(spec, K)
    B = float(np.sum(beta[: K - 1] ** 2 * (eta[1:K] + T[1:K])))
    cbrt2 = 2.0 ** (1.0 / 3.0)
    A_bound = (1.0 / cbrt2 + cbrt2 / 6.0 + 1.0 / 36.0) * spec.eta / (L * K ** (1.0 / 3.0))
    B_bound = 2.0 * spec.eta / ((1.0 - 2.0 ** (-2.0 / 3.0)) ** 2 * L)
    ok = first is None and A <= A_bound + VALIDATOR_SLACK and B <= B_bound + VALIDATOR_SLACK
    return DiscountReport(ok, first, float(A), B, A_bound, B_bound)


def discount_tail_bound_ok(spec, k, slack=1e-10):
    """Check sum_{j=k+1}^{K-1} G_j/G_k <= (k+2)^(2/3)/2 + (k+2)^(1/3)/6 + 1/36 + slack."""
    if spec.kind is not ScheduleKind.CONSTANT_II:
        raise ParameterError("the tail bound applies to the constant-ii schedule")
    if not 0 <= k:
        raise ParameterError(f"k must be nonnegative, got {k}")
    W = _discounted_tail_sums(spec, spec.K, np.ones(spec.K + 1))
    rhs = 0.5 * (k + 2.0) ** (2.0 / 3.0) + (k + 2.0) ** (1.0 / 3.0) / 6.0 + 1.0 / 36.0
    return float(W[k]) <= rhs + slack


def selection_weights(spec, K):
    """Probability distribution over iterates 0..K-1 for the randomized output.

    w_k is proportional to (eta_k/4)(1 - eta_k L) - (eta_k^2 / (5 m eta_{k+1}))(1 - beta_k)^2;
    a nonpositive raw weight means the schedule is infeasible for weighted selection.
    """
    if K < 1:
        raise ParameterError(f"K must be positive, got {K}")
    L, m = spec.L, spec.m
    eta = _etas(spec, K + 1)
    beta = _betas(spec, K)
    ek, ek1 = eta[:-1], eta[1:]
    raw = 0.25 * ek * (1.0 - ek * L) - (ek * ek / (5.0 * m * ek1)) * (1.0 - beta) ** 2
    bad = np.nonzero(raw <= 0.0)[0]
    if bad.size:
        k = int(bad[0])
        raise ScheduleInfeasibleError(
            f"selection weight at k={k} is nonpositive ({raw[k]:.3e}); "
            "the schedule does not admit weighted output selection"
        )
    return raw / raw.sum()
