"""Compare the compiled window kernel against the pure-Python stepper.

Runs the same DSMT workload (heterogeneous quadratic on a lazy uniform
ring) on both backends and reports steps per second plus the trajectory
deviation between them, which should sit at roundoff.

Usage::

    python3 benchmarks/bench_backends.py [--n 16] [--dim 8] [--steps 2000]
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dsmtlab import backend, rng  # noqa: E402
from dsmtlab.optimizers import (HyperParams, StepContext,  # noqa: E402
                                init_state)
from dsmtlab.oracles import make_quadratic_suite  # noqa: E402
from dsmtlab.topology import (GraphSpec, LcaOperator, build_graph,  # noqa: E402
                              mixing_from_graph)


def build_ctx(n: int, dim: int, seed: int) -> StepContext:
    graph = build_graph(GraphSpec("ring", n))
    mixing = mixing_from_graph(graph, "uniform_neighbor", lazy=True)
    suite = make_quadratic_suite(n, 12, dim, 1.0, 1.0, rng.data_rng(seed))
    hp = HyperParams(alpha=0.01, beta=LcaOperator(mixing=mixing).rho_tilde_w)
    return StepContext(suite=suite, hp=hp, rngs=rng.agent_rngs(seed, 0, n),
                       mixing=mixing, lca=LcaOperator(mixing=mixing),
                       batch_size=1)


def run(which: str, n: int, dim: int, steps: int, seed: int):
    os.environ["DSMTLAB_BACKEND"] = which
    ctx = build_ctx(n, dim, seed)
    x0 = np.tile(rng.init_rng(seed).standard_normal(dim), (n, 1))
    state = init_state("DSMT", x0, ctx)
    # Warm up allocation and code paths outside the timed region.
    state, _, _ = backend.run_window(state, ctx, 10)
    start = time.perf_counter()
    state, _, _ = backend.run_window(state, ctx, steps)
    elapsed = time.perf_counter() - start
    return state, elapsed


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=16)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not backend.HAVE_EXT:
        print("compiled extension unavailable; only the python backend runs")
        _, elapsed = run("python", args.n, args.dim, args.steps, args.seed)
        print(f"python: {args.steps / elapsed:10.0f} steps/s")
        return 0

    state_py, t_py = run("python", args.n, args.dim, args.steps, args.seed)
    state_ext, t_ext = run("ext", args.n, args.dim, args.steps, args.seed)
    dev = float(np.max(np.abs(state_py.x - state_ext.x)))
    scale = float(np.max(np.abs(state_py.x))) or 1.0

    print(f"workload: DSMT, ring n={args.n}, dim={args.dim}, "
          f"{args.steps} steps, batch 1")
    print(f"python: {args.steps / t_py:10.0f} steps/s  ({t_py:.3f} s)")
    print(f"ext:    {args.steps / t_ext:10.0f} steps/s  ({t_ext:.3f} s)")
    print(f"speedup: {t_py / t_ext:.1f}x")
    print(f"trajectory deviation: {dev / scale:.3e} relative")
    return 0


if __name__ == "__main__":
    sys.exit(main())
