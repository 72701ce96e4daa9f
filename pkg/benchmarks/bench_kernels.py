#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the numpy fallback.

Times forward, input-gradient, and weight-gradient passes over the layer
shapes the detector actually uses (360 bins, 32 channels, kernels 3/5/7),
then a whole forward+backward "step" composed of all seven layers.

Usage: python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sixthsense import _kernels_np, kernels

try:
    from sixthsense import _convcore
except ImportError:
    _convcore = None

LAYERS = [  # (in_ch, out_ch, kernel, dilation), history variant
    (30, 32, 3, 1),
    (32, 32, 3, 2),
    (32, 32, 5, 2),
    (32, 32, 5, 2),
    (32, 32, 5, 2),
    (32, 32, 7, 1),
    (32, 32, 7, 1),
]
BINS = 360


def flops_layer(batch, ci, co, k):
    return 2.0 * batch * BINS * ci * co * k


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name, impl, dtype, batch, repeats):
    rng = np.random.default_rng(7)
    total = {"forward": 0.0, "grad_input": 0.0, "grad_weights": 0.0}
    gflop = 0.0
    for ci, co, k, d in LAYERS:
        x = rng.standard_normal((batch, BINS, ci)).astype(dtype)
        w = (rng.standard_normal((co, ci, k)) * 0.1).astype(dtype)
        b = np.zeros(co, dtype=dtype)
        gy = rng.standard_normal((batch, BINS, co)).astype(dtype)
        total["forward"] += time_call(impl.conv_forward, (x, w, b, d), repeats)
        total["grad_input"] += time_call(impl.conv_backward_input, (gy, w, d), repeats)
        total["grad_weights"] += time_call(
            impl.conv_backward_weights, (x, gy, k, d), repeats
        )
        gflop += flops_layer(batch, ci, co, k) / 1e9
    step = sum(total.values())
    print(f"  {name:6s} {np.dtype(dtype).name:8s}", end="")
    for key in ("forward", "grad_input", "grad_weights"):
        rate = gflop / total[key]
        print(f"  {key} {total[key] * 1e3:7.2f} ms ({rate:6.1f} GFLOP/s)", end="")
    print(f"  | step {step * 1e3:7.2f} ms")
    return step


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {kernels.backend()}")
    print(f"seven conv layers, {BINS} bins, batch {args.batch}")
    impls = [("numpy", _kernels_np)]
    if _convcore is not None:
        impls.append(("cython", _convcore))
    for dtype in (np.float32, np.float64):
        steps = {}
        for name, impl in impls:
            steps[name] = bench_backend(name, impl, dtype, args.batch, args.repeats)
        if len(steps) == 2:
            ratio = steps["numpy"] / steps["cython"]
            faster = "cython" if ratio > 1 else "numpy"
            print(f"  -> {faster} is {max(ratio, 1 / ratio):.2f}x faster\n")


if __name__ == "__main__":
    main()
