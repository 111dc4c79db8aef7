#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Covers the three hot paths: the unit-commitment conjugate recursion (the
stage-1 bottleneck), the fleet-charging greedy conjugate, and the conic
reduction loop. Run after `pip install -e .`:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from sepfw.kernels import available_backends, load_backend


def timeit(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_uc(mod, nb, steps, calls):
    rng = np.random.default_rng(0)
    args = (rng.uniform(10, 20, nb), rng.uniform(2, 5, nb), rng.uniform(1, 20, nb),
            rng.uniform(3, 5, nb), rng.uniform(30, 50, nb), rng.uniform(1, 2, nb),
            rng.uniform(3, 6, nb))
    V = np.zeros((nb, steps))
    P = rng.normal(0, 50, (nb, steps))

    def run():
        for _ in range(calls):
            mod.uc_conjugate_batch(*args, V, P)

    return timeit(run, 3) / calls


def bench_pev(mod, nb, steps, calls):
    rng = np.random.default_rng(0)
    gains = rng.normal(0, 1, (nb, steps))
    lo = rng.integers(0, steps // 3, nb)
    hi = lo + rng.integers(0, steps // 2, nb)

    def run():
        for _ in range(calls):
            mod.pev_greedy_batch(gains, lo, hi)

    return timeit(run, 3) / calls


def bench_carath(mod, p, n_cols):
    rng = np.random.default_rng(0)
    W = rng.normal(size=(p, n_cols))
    lam = rng.uniform(0.1, 1.0, n_cols)
    u = rng.normal(size=(6, n_cols))
    u /= np.linalg.norm(u, axis=1, keepdims=True)

    def run():
        mod.exact_carath_core(lam, u, dense=W)

    return timeit(run, 2)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args()

    if args.quick:
        uc_size, pev_size, carath_cols, calls = (50, 10), (100, 24), 2000, 200
    else:
        uc_size, pev_size, carath_cols, calls = (50, 10), (500, 24), 20000, 1000

    rows = []
    for name in available_backends():
        mod = load_backend(name)
        t_uc = bench_uc(mod, *uc_size, calls)
        t_pev = bench_pev(mod, *pev_size, calls)
        t_car = bench_carath(mod, 61, carath_cols)
        rows.append((name, t_uc, t_pev, t_car))

    print(f"{'backend':<10} {'uc conj batch':>16} {'pev greedy batch':>18} "
          f"{'reduction N=%d' % carath_cols:>18}")
    for name, t_uc, t_pev, t_car in rows:
        print(f"{name:<10} {t_uc * 1e6:>13.1f} us {t_pev * 1e6:>15.1f} us "
              f"{t_car * 1e3:>15.1f} ms")
    if len(rows) == 2:
        base = rows[0]
        fast = rows[1]
        print(f"{'speedup':<10} {base[1] / fast[1]:>15.1f}x {base[2] / fast[2]:>17.1f}x "
              f"{base[3] / fast[3]:>17.1f}x")


if __name__ == "__main__":
    main()
