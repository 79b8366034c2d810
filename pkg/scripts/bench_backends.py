#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-NumPy fallback.

Times the ARD-SE kernel matrix (the hot path of every prediction step) and
the blocked CoraAvg weight computation for both backends. Backend selection
happens at import, so the fallback numbers come from a subprocess launched
with CORAGP_PURE_PYTHON=1.

Usage: python3 scripts/bench_backends.py [--sizes 100,400,1600] [--reps 20]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def run_current_backend(sizes, reps):
    from coragp import backend

    rng = np.random.default_rng(0)
    rows = []
    for M in sizes:
        P = rng.normal(size=(M, 2))
        Q = rng.normal(size=(32, 2))
        inv_ls = np.array([2.0, 2.0])
        offsets = np.array([0, M // 2, M], dtype=np.intp)
        kcat = rng.uniform(0.0, 1.0, size=(M, 32))

        def timeit(fn):
            fn()
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t0)
            return float(np.median(times) * 1e6)

        rows.append({
            "backend": backend.BACKEND_NAME,
            "M": M,
            "kernel_matrix_us": timeit(
                lambda: backend.kernel_matrix(P, Q, 1.0, inv_ls)),
            "cora_avg_weights_us": timeit(
                lambda: backend.cora_avg_weights(kcat, offsets, 0.15)),
        })
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="100,400,1600")
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--emit-json", action="store_true",
                        help="print raw rows as JSON (used by the subprocess)")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rows = run_current_backend(sizes, args.reps)
    if args.emit_json:
        print(json.dumps(rows))
        return

    env = dict(os.environ, CORAGP_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, __file__, "--sizes", args.sizes,
         "--reps", str(args.reps), "--emit-json"],
        env=env, capture_output=True, text=True, check=True)
    fallback = json.loads(out.stdout)

    header = f"{'M':>6} {'op':<22} {'compiled us':>12} {'numpy us':>10} {'speedup':>8}"
    print(f"primary backend: {rows[0]['backend']}")
    print(header)
    print("-" * len(header))
    for fast, pure in zip(rows, fallback):
        for op in ("kernel_matrix_us", "cora_avg_weights_us"):
            speed = pure[op] / fast[op]
            print(f"{fast['M']:>6} {op[:-3]:<22} {fast[op]:>12.1f} "
                  f"{pure[op]:>10.1f} {speed:>7.2f}x")


if __name__ == "__main__":
    main()
