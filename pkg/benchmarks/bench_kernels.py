"""Benchmark the trilinear contraction kernels: compiled extension vs the
pure-numpy fallback.

The contraction is the O(entries) inner loop of every right-hand-side
evaluation, so integrator cost is essentially proportional to these
numbers.  Run in two processes because the backend is chosen at import:

    python benchmarks/bench_kernels.py
    CRLAB_FORCE_NUMPY=1 python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from crlab import build_tensor, HOLOMORPHIC
from crlab.kernels import backend_name, build_plan, rhs_apply


def bench(cutoff, repeats=None):
    tensor = build_tensor(HOLOMORPHIC, cutoff)
    plan = build_plan(tensor)
    rng = np.random.default_rng(0)
    c = (rng.standard_normal(cutoff + 1) + 1j * rng.standard_normal(cutoff + 1))
    c /= np.linalg.norm(c)
    out = np.empty_like(c)

    rhs_apply(plan, c, out)  # warm up
    if repeats is None:
        # target ~0.5 s per size
        t0 = time.perf_counter()
        rhs_apply(plan, c, out)
        once = time.perf_counter() - t0
        repeats = max(3, min(20000, int(0.5 / max(once, 1e-7))))
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            rhs_apply(plan, c, out)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return len(tensor), best


def main():
    print(f"backend: {backend_name()}")
    print(f"{'N':>5} {'entries':>9} {'per rhs':>12} {'entries/s':>12}")
    for cutoff in (16, 32, 64, 128):
        entries, per_call = bench(cutoff)
        print(f"{cutoff:>5} {entries:>9} {per_call * 1e6:>10.1f}us "
              f"{entries / per_call:>12.3g}")


if __name__ == "__main__":
    main()
