#!/usr/bin/env python3
"""Benchmark the compiled extension against the pure-numpy fallback.

Times the two hot kernels (scalar cubic root, PDHG inner loop) on
desk-scale subproblems from the shipped families.  Run directly:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from bregmin import PdhgConfig, problems, solver
from bregmin._accel import COMPILED, pure
from bregmin._accel.pure import KERNEL_EUCLIDEAN, KERNEL_QUARTIC, REG_NONE

if COMPILED:
    from bregmin._accel import _core
else:
    _core = None


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_cubic(mod, s):
    return _time(lambda: mod.cubic_scale_batch(s))


def bench_pdhg(mod, spec, kernel_code, iters):
    K = np.ascontiguousarray(spec.affine_rows)
    offs = np.ascontiguousarray(spec.affine_offsets)
    c = np.ascontiguousarray(spec.model_center)
    nk = np.linalg.norm(K, 2)
    sig = 0.95 / nk

    def go():
        mod.pdhg(K, offs, 1.0 / K.shape[0], c, spec.tau, REG_NONE, 0.0,
                 kernel_code, sig, sig, 0.0, iters, c.copy(),
                 np.zeros(K.shape[0]))

    return _time(go)


def main():
    rows = []

    s = np.linspace(0.0, 1e6, 200_000)
    t_pure = bench_cubic(pure, s)
    t_core = bench_cubic(_core, s) if _core else float("nan")
    rows.append(("cubic_scale_batch (2e5 roots)", t_pure, t_core))

    inst = problems.gen_phase_retrieval(0, 50, 10)
    x0 = np.random.default_rng([0, 1]).standard_normal(10)
    for name, factory, code in (
        ("pdhg quartic (m2, 5k iters)", problems.model_problem_m2, KERNEL_QUARTIC),
        ("pdhg euclidean (robust, 5k iters)", problems.model_problem_robust,
         KERNEL_EUCLIDEAN),
    ):
        p = factory(inst)
        tr = solver.run(p, solver.SolverConfig(max_iters=5, record_time=False,
                                               inner=PdhgConfig(max_iters=500)), x0)
        spec = p.subproblem(tr.xs[-1], tr.tau_k[-1])
        t_pure = bench_pdhg(pure, spec, code, 5000)
        t_core = bench_pdhg(_core, spec, code, 5000) if _core else float("nan")
        rows.append((name, t_pure, t_core))

    print(f"compiled extension available: {COMPILED}")
    print(f"{'kernel':38s} {'pure (s)':>10s} {'compiled (s)':>13s} {'speedup':>8s}")
    for name, tp, tc in rows:
        speed = tp / tc if tc == tc and tc > 0 else float("nan")
        print(f"{name:38s} {tp:10.4f} {tc:13.4f} {speed:7.1f}x")


if __name__ == "__main__":
    main()
