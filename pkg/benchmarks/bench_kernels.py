#!/usr/bin/env python3
"""Compare the numba-compiled hot kernels against the pure-numpy fallback.

The backend is fixed at import time by LINRATE_DISABLE_NUMBA, so this
script re-executes itself once with the flag set and merges the two
timing tables.

Usage: python benchmarks/bench_kernels.py [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, *args, reps=7):
    fn(*args)  # warm-up (JIT compile / cache load), excluded
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_backend():
    from linrate._kernels import backend_name, cauchy_product_kernel, thinning_matrix_kernel

    rows = []
    for n in (64, 256, 1024, 4096):
        a = np.random.default_rng(0).uniform(-1, 1, n)
        b = np.random.default_rng(1).uniform(-1, 1, n)
        out = np.empty(n)
        rows.append(
            {
                "kernel": "cauchy_product",
                "size": n,
                "seconds": time_call(cauchy_product_kernel, a, b, out),
            }
        )
    for n in (128, 512, 2048):
        T = np.empty((n, n))
        rows.append(
            {
                "kernel": "thinning_matrix",
                "size": n,
                "seconds": time_call(thinning_matrix_kernel, n, 0.7, T),
            }
        )
    return {"backend": backend_name(), "rows": rows}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--json", default=None, help="write the merged table as JSON")
    parser.add_argument("--single", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.single:
        json.dump(run_backend(), sys.stdout)
        return

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, LINRATE_DISABLE_NUMBA=disable)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--single"],
            capture_output=True,
            text=True,
            env=env,
            check=True,
        )
        results.append(json.loads(out.stdout))

    merged = {}
    for res in results:
        for row in res["rows"]:
            merged.setdefault((row["kernel"], row["size"]), {})[res["backend"]] = row[
                "seconds"
            ]
    print(f"{'kernel':<18}{'size':>6}{'numba':>12}{'numpy':>12}{'speedup':>9}")
    table = []
    for (kernel, size), t in sorted(merged.items()):
        speedup = t.get("numpy", np.nan) / t.get("numba", np.nan)
        print(
            f"{kernel:<18}{size:>6}{t.get('numba', float('nan')):>12.2e}"
            f"{t.get('numpy', float('nan')):>12.2e}{speedup:>9.2f}"
        )
        table.append(
            {"kernel": kernel, "size": size, **t, "speedup_numba_over_numpy": speedup}
        )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(table, fh, indent=1)
        print(f"wrote {args.json}")


if __name__ == "__main__":
    main()
