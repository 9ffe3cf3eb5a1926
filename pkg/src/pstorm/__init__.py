"""Momentum-based variance-reduced proximal stochastic gradient methods.

Composite nonconvex optimization toolkit: the PStorm optimizer with three
baselines (proximal SGD, Spiderboost, Hybrid-SGD), problem oracles,
schedule validators, and a CLI benchmark harness.
"""

from .core import (
    CompositeProblem,
    Regularizer,
    SmoothOracle,
    gradient_mapping,
    stationarity_violation,
)
from .errors import (
    ConfigError,
    DataError,
    InputError,
    ParameterError,
    ParseError,
    ScheduleInfeasibleError,
)
from .optim import (
    HybridSgdConfig,
    OptimizerState,
    ProxSgdConfig,
    PStormConfig,
    SpiderboostConfig,
    hybrid_sgd_init,
    hybrid_sgd_params,
    hybrid_sgd_step,
    proxsgd_step,
    pstorm_init,
    pstorm_step,
    run,
    spiderboost_step,
)
from .prox import (
    L1Regularizer,
    NonnegBallIndicator,
    ZeroRegularizer,
    project_nonneg_ball,
    soft_threshold,
)
from .schedules import (
    ExplicitSchedule,
    ScheduleKind,
    ScheduleSpec,
    discount_products,
    discount_tail_bound_ok,
    selection_weights,
    validate_descent_condition,
    validate_discount_condition,
)

__version__ = "0.1.0"
