"""Timing of the channel sweep: numba kernels against the pure-numpy path.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Set CAUCHYOP_DISABLE_NUMBA=1 to check that the numpy fallback is what the
package selects when numba is switched off.
"""
import argparse
import json
import time

import numpy as np

from cauchyop import _kernels

SIZES = [(1, 80, 254), (8, 160, 254), (4, 160, 2046), (32, 80, 510)]


def _time(fn, repeat):
    fn()  # warm-up, includes compilation for numba
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat=5, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for batch, T, K in SIZES:
        t = np.geomspace(1e-3, 10, T)
        mu = rng.uniform(0.5, 50, K) + 1j * rng.uniform(-5, 5, K)
        plus = rng.random(K) < 0.5
        a = rng.standard_normal((batch, T, K)) + 1j * rng.standard_normal((batch, T, K))
        row = {"batch": batch, "T": T, "K": K}
        outs = {}
        for name, flag in (("numpy", False), ("numba", True)):
            for adj in (False, True):
                key = f"{name}{'_adj' if adj else ''}"
                row[key] = _time(lambda: _kernels.channel_sweep(a, t, mu, plus, adj, use_numba=flag), repeat)
                outs[key] = _kernels.channel_sweep(a, t, mu, plus, adj, use_numba=flag)
        row["max_diff"] = float(max(np.max(np.abs(outs["numpy"] - outs["numba"])),
                                    np.max(np.abs(outs["numpy_adj"] - outs["numba_adj"]))))
        row["speedup"] = row["numpy"] / row["numba"] if _kernels.USE_NUMBA else 1.0
        rows.append(row)
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", default=None)
    args = p.parse_args()
    rows = run(args.repeat)
    print(f"numba active: {_kernels.USE_NUMBA}")
    print(f"{'batch':>5} {'T':>4} {'K':>5} {'numpy[s]':>10} {'numba[s]':>10} {'speedup':>8} {'max|diff|':>10}")
    for r in rows:
        print(f"{r['batch']:5d} {r['T']:4d} {r['K']:5d} {r['numpy']:10.4f} {r['numba']:10.4f} "
              f"{r['speedup']:8.1f} {r['max_diff']:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
