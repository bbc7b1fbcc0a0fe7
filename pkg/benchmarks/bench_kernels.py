"""Compare the compiled and pure-Python integration kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each case integrates the fundamental matrix of a shipped problem on the
default quadrature grid with both backends and reports the best wall time
and the largest difference between the two results.
"""

import argparse
import sys
import time

import numpy as np

from evansbound import _backend, greens, odeint
from evansbound.cli import load_problem

CASES = [("mathieu", 3.0), ("fourth_order", 11.0), ("mkdv", 0.1 + 0.5j)]


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.native is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    print(f"{'problem':<14}{'native [s]':>12}{'python [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, lam in CASES:
        p = load_problem(name)
        sys_ = odeint.companion_system(p)
        grid = greens.triangle_rule(p.length, p.numerics.quad_nodes).grid
        run = lambda kern: odeint.propagate(sys_, lam, grid, None, p.numerics.tol, backend=kern)[0]
        tn, un = best_time(lambda: run(_backend.native), args.repeat)
        tp, up = best_time(lambda: run(_backend.python), max(1, args.repeat // 2))
        diff = np.max(np.abs(un - up)) / max(1.0, np.max(np.abs(un)))
        print(f"{name:<14}{tn:>12.4f}{tp:>12.4f}{tp / tn:>10.1f}{diff:>12.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
