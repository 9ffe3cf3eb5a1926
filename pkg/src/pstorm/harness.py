"""Experiment harness: run configuration, metrics collection, CSV emission.

A RunConfig pins one problem, one method, a budget in exactly one unit
(iterations, epochs, or samples), and a seed; identical configs produce
byte-identical CSV trajectories except for the informational wall-clock
column.  Metrics are recorded once per epoch (one pass of a finite-sum
dataset, or a configured sample count for streaming problems) and evaluated
on a fixed evaluation problem, so different methods and seeds are measured on
the same yardstick.
"""

import csv
import hashlib
import io
import time
import types
import typing
from dataclasses import dataclass, fields, replace

import numpy as np

from .core import CompositeProblem, gradient_mapping
from .dataio import gen_synthetic_classes, load_idx_dataset, normalize_rows, parse_libsvm
from .errors import ConfigError, InputError, ParameterError, ScheduleInfeasibleError
from .optim import (
    HybridSgdConfig,
    ProxSgdConfig,
    PStormConfig,
    SpiderboostConfig,
    hybrid_sgd_params,
    run,
)
from .problems import (
    NpcaFiniteSum,
    NpcaStream,
    SparseMlp,
    density_pct,
    mlp_init,
    npca_dataset,
    npca_initial_point,
    reference_solution,
)
from .prox import L1Regularizer, NonnegBallIndicator
from .schedules import ScheduleKind, ScheduleSpec, validate_descent_condition

PROBLEMS = ("npca-random", "npca-libsvm", "mlp-synth", "mlp-mnist")
METHODS = ("pstorm", "proxsgd", "spiderboost", "hybrid-sgd")
CSV_COLUMNS = ("epoch", "samples", "objective", "obj_error", "stationarity", "density_pct", "wall_ms")

# fields that define the problem being solved; compare() requires them to agree
PROBLEM_FIELDS = (
    "problem",
    "lam",
    "dim",
    "train_n",
    "test_n",
    "classes",
    "separation",
    "hidden1",
    "hidden2",
    "data_seed",
    "data_path",
    "images_path",
    "labels_path",
    "eval_samples",
    "eval_seed",
    "ref_iters",
    "ref_eta",
    "stationarity_eta",
)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "npca-random"
    method: str = "pstorm"
    # budget: exactly one of the three
    iters: int | None = None
    epochs: int | None = None
    samples: int | None = None
    seed: int = 1
    out: str | None = None
    output_rule: str = "uniform"
    strict: bool = False
    force: bool = False
    # schedule / stepsizes
    schedule: str = "varying"
    eta: float = 0.1
    m: int = 10
    m0: int | None = None
    # spiderboost
    q: int = 200
    big_batch: int = 40000
    small_batch: int = 200
    # hybrid-sgd parameter law; a fixed gamma selects the finite-sum variant
    c0: float = 10.0
    c1: float = 5.0
    hybrid_gamma: float | None = None
    # regularization
    lam: float = 0.0
    # problem shapes and data
    dim: int = 100
    train_n: int = 2000
    test_n: int = 500
    classes: int = 4
    separation: float = 3.0
    hidden1: int = 32
    hidden2: int = 16
    data_seed: int = 7
    data_path: str | None = None
    images_path: str | None = None
    labels_path: str | None = None
    test_images_path: str | None = None
    test_labels_path: str | None = None
    # evaluation
    eval_samples: int = 100000
    eval_seed: int = 12345
    samples_per_epoch: int | None = None
    stationarity_eta: float = 1.0
    ref_iters: int = 1000
    ref_eta: float | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        n_budgets = sum(v is not None for v in (self.iters, self.epochs, self.samples))
        if n_budgets != 1:
            raise ConfigError("exactly one of iters/epochs/samples must set the budget")
        if self.output_rule not in ("uniform", "weighted", "last"):
            raise ConfigError(f"unknown output rule {self.output_rule!r}")
        if self.problem.startswith("npca") and self.lam != 0.0:
            raise ConfigError("the nonnegative-PCA problems take the ball constraint, not an l1 weight")
        if self.lam < 0:
            raise ConfigError(f"lam must be nonnegative, got {self.lam}")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    samples: int
    objective: float
    obj_error: float
    stationarity: float
    density_pct: float
    wall_ms: int


@dataclass
class ProblemBundle:
    """Everything run_experiment needs beyond the method itself."""

    problem: CompositeProblem
    eval_problem: CompositeProblem
    x0: np.ndarray
    fingerprint: str
    ref_x0: np.ndarray
    test_set: object = None
    oracle_for_accuracy: object = None


def _sha(*chunks):
    h = hashlib.sha1()
    for c in chunks:
        h.update(c if isinstance(c, bytes) else str(c).encode())
    return h.hexdigest()


def _budget_samples(cfg, n_finite):
    if cfg.samples is not None:
        return cfg.samples
    if cfg.epochs is not None:
        unit = n_finite if n_finite is not None else cfg.samples_per_epoch
        if unit is None:
            raise ConfigError("an epoch budget on a streaming problem needs samples_per_epoch")
        return cfg.epochs * unit
    return None  # iteration budget


def _epoch_unit(cfg, n_finite, total_samples):
    if n_finite is not None:
        return n_finite
    if cfg.samples_per_epoch is not None:
        return cfg.samples_per_epoch
    if total_samples is not None:
        return max(total_samples // 100, 1)
    raise ConfigError("a streaming problem with an iteration budget needs samples_per_epoch")


_EVAL_PROBLEM_CACHE = {}


def _npca_eval_problem(dim, eval_samples, eval_seed):
    key = (dim, eval_samples, eval_seed)
    if key not in _EVAL_PROBLEM_CACHE:
        matrix = npca_dataset(np.random.default_rng(eval_seed), eval_samples, dim)
        _EVAL_PROBLEM_CACHE[key] = CompositeProblem(NpcaFiniteSum(matrix), NonnegBallIndicator())
    return _EVAL_PROBLEM_CACHE[key]


def build_problem(cfg, rng):
    """Instantiate the configured problem, its evaluation twin, and the start point."""
    if cfg.problem == "npca-random":
        reg = NonnegBallIndicator()
        oracle = NpcaStream(cfg.dim, eval_samples=cfg.eval_samples, eval_seed=cfg.eval_seed)
        eval_problem = _npca_eval_problem(cfg.dim, cfg.eval_samples, cfg.eval_seed)
        x0 = npca_initial_point(cfg.dim)
        return ProblemBundle(
            problem=CompositeProblem(oracle, reg),
            eval_problem=eval_problem,
            x0=x0,
            fingerprint=_sha("npca-random", cfg.dim, cfg.eval_samples, cfg.eval_seed),
            ref_x0=x0,
        )
    if cfg.problem == "npca-libsvm":
        if cfg.data_path is None:
            raise ConfigError("npca-libsvm needs data_path")
        with open(cfg.data_path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh)
        ds = normalize_rows(ds)
        oracle = NpcaFiniteSum(ds.features.to_csr())
        reg = NonnegBallIndicator()
        problem = CompositeProblem(oracle, reg)
        x0 = npca_initial_point(oracle.dim)
        fp = _sha(
            "npca-libsvm",
            ds.features.data.tobytes(),
            ds.features.indices.tobytes(),
            ds.features.indptr.tobytes(),
        )
        return ProblemBundle(
            problem=problem, eval_problem=problem, x0=x0, fingerprint=fp, ref_x0=x0,
        )
    if cfg.problem == "mlp-synth":
        dims = (cfg.dim, cfg.hidden1, cfg.hidden2, cfg.classes)
        train = gen_synthetic_classes(
            np.random.default_rng(cfg.data_seed), cfg.train_n, cfg.dim, cfg.classes, cfg.separation
        )
        test = gen_synthetic_classes(
            np.random.default_rng(cfg.data_seed + 1), cfg.test_n, cfg.dim, cfg.classes, cfg.separation
        )
    else:  # mlp-mnist
        dims = (784, 120, 84, 10)
        need = (cfg.images_path, cfg.labels_path, cfg.test_images_path, cfg.test_labels_path)
        if any(p is None for p in need):
            raise ConfigError("mlp-mnist needs images/labels paths for both splits")
        train = load_idx_dataset(cfg.images_path, cfg.labels_path)
        test = load_idx_dataset(cfg.test_images_path, cfg.test_labels_path)
    oracle = SparseMlp(train.features, train.labels, dims)
    problem = CompositeProblem(oracle, L1Regularizer(cfg.lam))
    x0 = mlp_init(dims, rng)
    fp = _sha(cfg.problem, np.ascontiguousarray(train.features).tobytes(),
              train.labels.tobytes(), dims, cfg.lam)
    return ProblemBundle(
        problem=problem,
        eval_problem=problem,
        x0=x0,
        fingerprint=fp,
        ref_x0=mlp_init(dims, np.random.default_rng(cfg.eval_seed)),
        test_set=test,
        oracle_for_accuracy=oracle,
    )


def _spiderboost_steps(budget, q, ckpt_cost, small):
    cycle = ckpt_cost + (q - 1) * small
    k = (budget // cycle) * q
    rem = budget % cycle
    if rem >= ckpt_cost:
        k += 1
        rem -= ckpt_cost
        k += min(q - 1, rem // small) if small > 0 else 0
    return k


def build_method(cfg, bundle, budget_samples):
    """Map a RunConfig onto a method config and an iteration count K."""
    n = getattr(bundle.problem.smooth, "n_samples", None)
    if cfg.method == "pstorm":
        m0 = cfg.m0 if cfg.m0 is not None else cfg.m
        if cfg.iters is not None:
            K = cfg.iters
        else:
            K = max((budget_samples - m0) // cfg.m, 0)
        kind = ScheduleKind(cfg.schedule)
        horizon = K if kind is not ScheduleKind.VARYING else None
        try:
            spec = ScheduleSpec(kind=kind, eta=cfg.eta, L=bundle.problem.smooth.smoothness_estimate,
                                m=cfg.m, K=horizon, unchecked=cfg.force)
        except ParameterError as exc:
            raise ScheduleInfeasibleError(str(exc)) from exc
        return PStormConfig(schedule=spec, m=cfg.m, m0=m0), K
    if cfg.method == "proxsgd":
        K = cfg.iters if cfg.iters is not None else budget_samples // cfg.m
        return ProxSgdConfig(eta0=cfg.eta, m=cfg.m), K
    if cfg.method == "spiderboost":
        ckpt = min(cfg.big_batch, n) if n is not None else cfg.big_batch
        if cfg.iters is not None:
            K = cfg.iters
        else:
            K = _spiderboost_steps(budget_samples, cfg.q, ckpt, cfg.small_batch)
        return SpiderboostConfig(eta=cfg.eta, q=cfg.q, big_batch=cfg.big_batch,
                                 small_batch=cfg.small_batch), K
    # hybrid-sgd: the parameter law couples m0 and K, so resolve the budget iteratively
    L = bundle.problem.smooth.smoothness_estimate
    floor = n if cfg.hybrid_gamma is not None else None
    if cfg.iters is not None:
        K = cfg.iters
        gamma, beta, eta, m0 = _hybrid_params(cfg, K, L, floor)
    else:
        K = max(budget_samples // (2 * cfg.m), 1)
        for _ in range(8):
            gamma, beta, eta, m0 = _hybrid_params(cfg, K, L, floor)
            K_new = max((budget_samples - m0) // (2 * cfg.m), 0)
            if K_new == K:
                break
            K = K_new
            if K == 0:
                break
        if K > 0:
            gamma, beta, eta, m0 = _hybrid_params(cfg, K, L, floor)
    return HybridSgdConfig(gamma=gamma, beta=beta, eta=eta, m=cfg.m, m0=m0), K


def _hybrid_params(cfg, K, L, floor):
    if cfg.m0 is not None:
        m0 = cfg.m0
        gamma = cfg.hybrid_gamma
        if gamma is None:
            gamma = 3.0 * cfg.c0 * cfg.m ** 0.75 / (np.sqrt(13.0) * m0 * (K + 1.0) ** 0.25)
        if not 0.0 < gamma <= 1.0:
            raise ParameterError(f"hybrid-SGD gamma evaluates to {gamma}, outside (0, 1]")
        beta = 1.0 - np.sqrt(cfg.m) / np.sqrt(m0 * K)
        return gamma, beta, 2.0 / (L * (3.0 + gamma)), m0
    return hybrid_sgd_params(cfg.c0, cfg.c1, cfg.m, max(K, 1), L,
                             m0_floor=floor, fixed_gamma=cfg.hybrid_gamma)


_REFERENCE_CACHE = {}


def get_reference(cfg, bundle):
    """Prox-gradient reference objective, cached per problem spec + dataset hash."""
    eta = cfg.ref_eta
    if eta is None:
        eta = 1.0 / bundle.eval_problem.smooth.smoothness_estimate
    key = (bundle.fingerprint, cfg.ref_iters, eta, bundle.ref_x0.tobytes())
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = reference_solution(
            bundle.eval_problem, bundle.ref_x0, cfg.ref_iters, eta
        )
    return _REFERENCE_CACHE[key]


def mlp_accuracy(oracle, theta, test_set):
    """Percentage of correct argmax predictions; ties resolve to the lowest class."""
    X = np.asarray(test_set.features, dtype=np.float64)
    y = np.asarray(test_set.labels)
    if len(X) == 0:
        raise InputError("test set is empty")
    probs = oracle.forward(theta, X)
    pred = np.argmax(probs, axis=1) + 1
    return 100.0 * float(np.mean(pred == y))


def _format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_value(getattr(row, c)) for c in CSV_COLUMNS])


@dataclass
class ExperimentResult:
    rows: list
    summary: dict
    csv_text: str
    selected_x: np.ndarray
    final_x: np.ndarray


def run_experiment(cfg):
    """Execute one configured run; returns the rows, the summary, and the CSV text.

    The summary averages the last five epoch rows.  If cfg.out is set the CSV
    is also written there.
    """
    rng = np.random.default_rng(cfg.seed)
    bundle = build_problem(cfg, rng)
    n = getattr(bundle.problem.smooth, "n_samples", None)
    budget_samples = _budget_samples(cfg, n)
    epoch_samples = _epoch_unit(cfg, n, budget_samples)
    method, K = build_method(cfg, bundle, budget_samples)

    if cfg.strict and isinstance(method, PStormConfig):
        report = validate_descent_condition(method.schedule, max(K, 1))
        if not report.ok and not cfg.force:
            raise ScheduleInfeasibleError(
                f"strict mode: {report.detail}; pass force=true to run anyway"
            )

    reference = get_reference(cfg, bundle)
    t0 = time.perf_counter()

    eval_problem = bundle.eval_problem

    def metrics_at(epoch, x, samples):
        if hasattr(eval_problem.smooth, "objective_and_gradient"):
            smooth_obj, grad = eval_problem.smooth.objective_and_gradient(x)
        else:
            smooth_obj, grad = eval_problem.smooth.objective(x), eval_problem.smooth.full_gradient(x)
        obj = smooth_obj + eval_problem.reg.value(x)
        mapping = gradient_mapping(eval_problem, x, grad, cfg.stationarity_eta)
        return MetricsRow(
            epoch=epoch,
            samples=samples,
            objective=obj,
            obj_error=obj - reference.objective,
            stationarity=float(np.linalg.norm(mapping)),
            density_pct=density_pct(x),
            wall_ms=int((time.perf_counter() - t0) * 1000),
        )

    def metrics_fn(epoch, state):
        try:
            return metrics_at(epoch, state.x, state.samples_consumed)
        except Exception as exc:
            raise RuntimeError(
                f"metric evaluation failed for method {cfg.method!r} at iteration "
                f"{state.k} (epoch {epoch}): {exc}"
            ) from exc

    result = run(
        bundle.problem,
        method,
        K,
        bundle.x0,
        rng,
        output_rule=cfg.output_rule,
        epoch_samples=epoch_samples,
        metrics_fn=metrics_fn,
    )
    rows = result.rows
    if not rows:
        rows = [metrics_at(0, result.final_x, result.samples_consumed)]

    buf = io.StringIO()
    write_csv(rows, buf)
    csv_text = buf.getvalue()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)

    tail = rows[-5:]
    summary = {
        "method": cfg.method,
        "epochs": rows[-1].epoch,
        "samples": rows[-1].samples,
        "objective": float(np.mean([r.objective for r in tail])),
        "obj_error": float(np.mean([r.obj_error for r in tail])),
        "stationarity": float(np.mean([r.stationarity for r in tail])),
        "density_pct": float(np.mean([r.density_pct for r in tail])),
    }
    if bundle.test_set is not None:
        summary["test_accuracy"] = mlp_accuracy(
            bundle.oracle_for_accuracy, result.final_x, bundle.test_set
        )
    return ExperimentResult(
        rows=rows,
        summary=summary,
        csv_text=csv_text,
        selected_x=result.selected_x,
        final_x=result.final_x,
    )


def _problem_signature(cfg):
    return {f: getattr(cfg, f) for f in PROBLEM_FIELDS}


def compare(configs, seeds, out=None):
    """Run each config over the shared seed list and merge median trajectories.

    All configs must describe the same problem.  Returns (rows, summaries)
    where rows are dicts with a leading method column and per-epoch medians
    across seeds, merged deterministically by (config order, epoch).
    """
    if not configs:
        raise ConfigError("compare needs at least one config")
    sig = _problem_signature(configs[0])
    for c in configs[1:]:
        if _problem_signature(c) != sig:
            raise ConfigError("compare requires all configs to share the problem spec")
    per_method = []
    for cfg in configs:
        runs = [run_experiment(replace(cfg, seed=s, out=None)) for s in seeds]
        per_method.append((cfg, runs))

    merged = []
    summaries = []
    for cfg, runs in per_method:
        n_rows = min(len(r.rows) for r in runs)
        for i in range(n_rows):
            cells = [r.rows[i] for r in runs]
            merged.append({
                "method": cfg.method,
                "epoch": cells[0].epoch,
                "samples": int(np.median([c.samples for c in cells])),
                "objective": float(np.median([c.objective for c in cells])),
                "obj_error": float(np.median([c.obj_error for c in cells])),
                "stationarity": float(np.median([c.stationarity for c in cells])),
                "density_pct": float(np.median([c.density_pct for c in cells])),
            })
        summary = {
            "method": cfg.method,
            "train": float(np.median([r.summary["objective"] for r in runs])),
            "grad": float(np.median([r.summary["stationarity"] for r in runs])),
            "density": float(np.median([r.summary["density_pct"] for r in runs])),
        }
        if "test_accuracy" in runs[0].summary:
            summary["test"] = float(np.median([r.summary["test_accuracy"] for r in runs]))
        summaries.append(summary)

    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            cols = ("method", "epoch", "samples", "objective", "obj_error",
                    "stationarity", "density_pct")
            writer.writerow(cols)
            for row in merged:
                writer.writerow([row["method"]] + [_format_value(row[c]) for c in cols[1:]])
    return merged, summaries


_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(name, text, typ):
    text = text.strip()
    if typ is bool:
        low = text.lower()
        if low not in _BOOL_STRINGS:
            raise ConfigError(f"{name}: expected a boolean, got {text!r}")
        return _BOOL_STRINGS[low]
    try:
        return typ(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {typ.__name__}, got {text!r}") from None


def _base_type(t):
    if isinstance(t, str):
        t = t.replace(" ", "")
        return {"int|None": int, "float|None": float, "str|None": str,
                "int": int, "float": float, "str": str, "bool": bool}.get(t, str)
    if isinstance(t, types.UnionType):
        args = [a for a in typing.get_args(t) if a is not type(None)]
        return args[0] if args else str
    return t


_FIELD_TYPES = {f.name: _base_type(f.type) for f in fields(RunConfig)}


def config_from_mapping(mapping, base=None):
    """Build a RunConfig from string keys/values (config file or CLI), over a base."""
    kwargs = {}
    for key, value in mapping.items():
        name = key.strip().replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[name] = value if not isinstance(value, str) else _coerce(name, value, _FIELD_TYPES[name])
    if base is not None:
        return replace(base, **kwargs)
    return RunConfig(**kwargs)


def parse_config_file(path):
    """Flat ``key = value`` file, '#' comments; returns the raw string mapping."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping
