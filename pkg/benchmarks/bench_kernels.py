"""Benchmark the compiled forest-traversal kernel against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--n 20000] [--trees 100] [--repeats 5]
"""

import argparse
import time

import numpy as np

from adloop import _kernels_py, kernels
from adloop.data import make_synthetic
from adloop.forest import build_forest


def time_kernel(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--d", type=int, default=8)
    parser.add_argument("--trees", type=int, default=100)
    parser.add_argument("--subsample", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    ds = make_synthetic(n=args.n, d=args.d, anomaly_fraction=0.02, seed=0)
    model = build_forest(ds.X, T=args.trees, subsample=args.subsample, rng_seed=0)
    kernel_args = (
        ds.X,
        model._node_feature,
        model._node_threshold,
        model._node_left,
        model._node_right,
        model._node_leaf,
        model._tree_roots,
    )

    print(f"forest: T={model.T} m={model.m} leaves, data: n={args.n} d={args.d}")
    t_py, out_py = time_kernel(_kernels_py.apply_forest, kernel_args, args.repeats)
    print(f"numpy fallback : {t_py * 1e3:9.2f} ms")
    if kernels.USING_COMPILED:
        from adloop import _ckernels

        t_c, out_c = time_kernel(_ckernels.apply_forest, kernel_args, args.repeats)
        match = np.array_equal(out_py, out_c)
        print(f"compiled kernel: {t_c * 1e3:9.2f} ms   ({t_py / t_c:.1f}x speedup, outputs match: {match})")
    else:
        print("compiled kernel: not built on this install (pure-Python fallback active)")


if __name__ == "__main__":
    main()
