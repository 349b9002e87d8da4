"""Compare the compiled and pure-python barrier evaluation backends.

Builds a representative DF-TDMA-shaped program and times eval_barrier on
both implementations, then times a full solve through each.

Usage: python benchmarks/bench_kernel.py [n_devices] [repeats]
"""

import sys
import time

import numpy as np

from coopsim.solver.kernel import get_backend, solve
from coopsim.solver.problem import ConvexProgram


def build_program(n_dev=10, rng=None):
    """A DF-TDMA-like program: n_dev powers + n_dev rate auxiliaries."""
    rng = rng or np.random.default_rng(0)
    nv = 2 * n_dev
    cost = np.zeros(nv)
    cost[:n_dev] = 1.0
    prog = ConvexProgram(nv, cost)
    prog.add_constraint(offset=-50.0 * n_dev,
                        inv=[(25.0, n_dev + i) for i in range(n_dev)])
    gains = rng.uniform(1e3, 1e5, n_dev)
    for i in range(n_dev):
        e = np.zeros(nv)
        e[n_dev + i] = 1.0
        row = np.zeros(nv)
        row[i] = -gains[i]
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])
        prog.add_box(i, lower=0.0, upper=1.0)
    x0 = np.zeros(nv)
    x0[:n_dev] = 1.0 - 1e-6
    x0[n_dev:] = (1.0 - 1e-6) * np.log2(1.0 + gains * x0[:n_dev])
    return prog.compile(), x0


def bench_eval(impl, prog, x0, repeats):
    impl.eval_barrier(prog, x0)          # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        impl.eval_barrier(prog, x0)
    return (time.perf_counter() - t0) / repeats


def bench_solve(name, prog, x0, repeats):
    t0 = time.perf_counter()
    for _ in range(repeats):
        res = solve(prog, x0=x0, backend=name)
    return (time.perf_counter() - t0) / repeats, res


def main():
    n_dev = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    repeats = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
    prog, x0 = build_program(n_dev)
    print(f"program: {prog.n} vars, {prog.m} constraints")

    backends = ["python"]
    try:
        get_backend("compiled")
        backends.append("compiled")
    except Exception:
        print("compiled backend unavailable; benchmarking python only")

    results = {}
    for name in backends:
        impl = get_backend(name)
        dt = bench_eval(impl, prog, x0, repeats)
        st, res = bench_solve(name, prog, x0, max(1, repeats // 100))
        results[name] = (dt, st)
        print(f"{name:>9}: eval_barrier {dt * 1e6:9.1f} us   "
              f"solve {st * 1e3:8.2f} ms   status={res.status}")
    if len(results) == 2:
        speedup = results["python"][0] / results["compiled"][0]
        print(f"compiled eval speedup: {speedup:.2f}x")


if __name__ == "__main__":
    main()
