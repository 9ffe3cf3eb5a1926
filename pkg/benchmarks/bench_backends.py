"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times each hot kernel on optimizer-sized arrays and an end-to-end stochastic
run under both backends.  Run from the repository root:

    python benchmarks/bench_backends.py [--steps 20000] [--dim 100] [--m 10]
"""

import argparse
import time

import numpy as np

from pstorm import kernels
from pstorm.core import CompositeProblem
from pstorm.optim import pstorm_init, pstorm_step
from pstorm.problems import NpcaStream, npca_initial_point
from pstorm.prox import NonnegBallIndicator
from pstorm.schedules import ScheduleKind, ScheduleSpec


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def kernel_cases(dim, m):
    rng = np.random.default_rng(0)
    z = rng.standard_normal(dim)
    batch = np.ascontiguousarray(rng.standard_normal((m, dim)))
    x1, x2 = rng.standard_normal((2, dim))
    v, u, d = rng.standard_normal((3, dim))
    w = rng.standard_normal((m, dim)) + 1.0
    return {
        "soft_threshold": lambda impl: impl.soft_threshold(z, 0.1),
        "project_nonneg_ball": lambda impl: impl.project_nonneg_ball(z),
        "neg_corr_grad_pair": lambda impl: impl.neg_corr_grad_pair(batch, x1, x2),
        "momentum_update": lambda impl: impl.momentum_update(v, u, d, 0.3),
        "normalize_rows_inplace": lambda impl: impl.normalize_rows_inplace(w.copy()),
    }


def end_to_end(steps, dim, m):
    problem = CompositeProblem(NpcaStream(dim), NonnegBallIndicator())
    spec = ScheduleSpec(ScheduleKind.VARYING, eta=0.1, L=1.0, m=m)
    rng = np.random.default_rng(7)
    state = pstorm_init(problem, npca_initial_point(dim), m, rng)
    start = time.perf_counter()
    for _ in range(steps):
        state = pstorm_step(state, problem, spec, m)
    return time.perf_counter() - start, state


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--m", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=20000)
    args = parser.parse_args()

    names = kernels.available_backends()
    if len(names) < 2:
        print("compiled backend unavailable; benchmarking numpy only")

    print(f"\nper-kernel time (dim={args.dim}, m={args.m}; best of 3 x {args.repeats}):")
    cases = kernel_cases(args.dim, args.m)
    header = f"{'kernel':<24}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else "")
    print(header)
    for case, fn in cases.items():
        times = [time_call(lambda impl=kernels.get_backend(n): fn(impl), args.repeats) for n in names]
        row = f"{case:<24}" + "".join(f"{t * 1e6:>10.2f}us" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)

    print(f"\nend-to-end momentum-VR run ({args.steps} steps):")
    saved = kernels.BACKEND
    results = {}
    try:
        for name in names:
            kernels.use_backend(name)
            elapsed, state = end_to_end(args.steps, args.dim, args.m)
            results[name] = elapsed
            print(f"  {name:>8}: {elapsed:.2f}s  ({elapsed / args.steps * 1e6:.1f}us/step, "
                  f"{state.samples_consumed} samples)")
    finally:
        kernels.use_backend(saved)
    if len(results) > 1:
        print(f"  speedup: {results['numpy'] / results['cython']:.2f}x")


if __name__ == "__main__":
    main()
