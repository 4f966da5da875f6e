"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-repeat time for each backend
and the speedup. Exits with status 1 when the compiled core is not built.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from pushopt import _core_py
from pushopt.config import scenario_problem

try:
    from pushopt import _core
except ImportError:
    _core = None


def cases(rng: np.random.Generator):
    problem, _ = scenario_problem("square")
    sup = problem.support
    W = rng.normal(size=(200, 3))
    W /= np.linalg.norm(W, axis=1)[:, None]
    W[:, 1] = np.abs(W[:, 1])
    mg = np.array([0.0, -0.5, 0.0])
    nodes = rng.normal(size=(5000, 3))
    q = rng.normal(size=3)
    n = 30
    M = rng.normal(size=(n, n))
    G = M @ M.T + n * np.eye(n)
    g = rng.normal(size=n)
    Aeq = rng.normal(size=(5, n))
    beq = Aeq @ rng.normal(size=n)
    Ain = rng.normal(size=(60, n))
    bin_ = rng.uniform(0.0, 1.0, 60)
    return {
        "stable_push_batch (200 wrenches)": lambda m: m.stable_push_batch(W, np.eye(3), mg, sup.friction_scale, sup.A_diag),
        "nearest_index (5000 nodes)": lambda m: m.nearest_index(nodes, q, 0.9, 0.1),
        "qp_solve (n=30, 5 eq, 60 ineq)": lambda m: m.qp_solve(G, g, Aeq, beq, Ain, bin_),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled core not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    print(f"{'kernel':34s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        times = {}
        for label, mod in (("python", _core_py), ("compiled", _core)):
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times[label] = 1e3 * best
        print(f"{name:34s} {times['python']:10.3f} {times['compiled']:12.4f} {times['python'] / times['compiled']:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
