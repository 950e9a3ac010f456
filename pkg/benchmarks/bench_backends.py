#!/usr/bin/env python3
"""Compare the compiled and pure-python kernel backends.

Times the two hot kernels in isolation and a short end-to-end evolution,
printing per-backend timings and the speedup.  Usage:

    python3 benchmarks/bench_backends.py [--points 256] [--repeats 200]
"""

import argparse
import time

import numpy as np

from kgdg import kernels
from kgdg.harness import make_initial
from kgdg.lattice import GridSpec
from kgdg.scheme import PhysicsParams, SolverConfig, evolve


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_gradient(n, repeats):
    rng = np.random.default_rng(0)
    a = rng.uniform(-2, 2, n)
    b = rng.uniform(-2, 2, n)
    return best_of(lambda: kernels.nl_gradient_deriv(a, b, 5, 1e-12), repeats)


def bench_solve(n, repeats):
    rng = np.random.default_rng(1)
    d = rng.uniform(5.0, 20.0, n)
    rhs = rng.normal(size=n)
    return best_of(lambda: kernels.solve_wide_cyclic(d, -1.3, rhs), repeats)


def bench_evolve(n, repeats):
    grid = GridSpec(1, (n,), (1.0 / n,), 1.0 / (10 * n))
    params = PhysicsParams(mass=4.0, lam=1.0, p=5)
    state = make_initial(grid, 2.0)
    solver = SolverConfig(tol=1e-10)
    return best_of(lambda: evolve(state, params, solver, 0.1), max(1, repeats // 20))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if len(backends) < 2:
        print(f"only the {backends[0]!r} backend is available; nothing to compare")

    cases = [
        ("nl_gradient_deriv", bench_gradient),
        ("solve_wide_cyclic", bench_solve),
        ("evolve 0.1s horizon", bench_evolve),
    ]
    results = {}
    for name in backends:
        kernels.set_backend(name)
        for label, fn in cases:
            results[(label, name)] = fn(args.points, args.repeats)

    width = max(len(label) for label, _ in cases)
    print(f"N = {args.points}, best of {args.repeats} repeats")
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    print(header)
    for label, _ in cases:
        row = f"{label:<{width}}  "
        row += "  ".join(f"{results[(label, b)] * 1e6:>10.1f}us" for b in backends)
        if "python" in backends and "compiled" in backends:
            ratio = results[(label, "python")] / results[(label, "compiled")]
            row += f"   compiled speedup {ratio:.2f}x"
        print(row)


if __name__ == "__main__":
    main()
