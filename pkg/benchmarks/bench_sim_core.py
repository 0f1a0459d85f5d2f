"""Throughput comparison of the compiled and pure-Python event kernels.

Runs the same replication workload on each available backend and
reports wall time, event rows generated, and rows per second.  The
compiled kernel is the default at import time when present; this
script quantifies what that buys on the current machine.

Usage:
    python benchmarks/bench_sim_core.py --reps 20 --n 400 --seed 0
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from matchq.params import SystemParams
from matchq.rng import STREAM_SIMULATION, derive_seed
from matchq.simulate import available_backends, simulate


def build_params(K: int, n: int) -> SystemParams:
    lam = np.full(K, float(n))
    delta = np.ones(K)
    q0 = np.zeros(K, dtype=np.int64)
    return SystemParams(K=K, n=n, lam=lam, delta=delta, q0=q0)


def bench_backend(backend: str, params: SystemParams, horizon: float,
                  reps: int, master_seed: int) -> tuple[float, int]:
    rows = 0
    start = time.perf_counter()
    for r in range(reps):
        seed = derive_seed(master_seed, STREAM_SIMULATION, r)
        rows += simulate(params, horizon, seed, backend=backend).n_rows
    return time.perf_counter() - start, rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--K", type=int, default=3, help="number of categories")
    parser.add_argument("--n", type=int, default=400, help="arrival scale (lam_i = n)")
    parser.add_argument("--horizon", type=float, default=1.0)
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    params = build_params(args.K, args.n)
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"workload: K={args.K} lam_i={args.n} horizon={args.horizon} reps={args.reps}")
    print(f"{'backend':<10}{'seconds':>10}{'rows':>12}{'rows/s':>14}")

    timings = {}
    for backend in backends:
        # One warmup replication keeps import and allocation effects out.
        simulate(params, args.horizon, derive_seed(args.seed, STREAM_SIMULATION, 0),
                 backend=backend)
        elapsed, rows = bench_backend(backend, params, args.horizon,
                                      args.reps, args.seed)
        timings[backend] = elapsed
        print(f"{backend:<10}{elapsed:>10.3f}{rows:>12}{rows / elapsed:>14.0f}")

    if "c" in timings and "python" in timings:
        print(f"speedup (python/c): {timings['python'] / timings['c']:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
