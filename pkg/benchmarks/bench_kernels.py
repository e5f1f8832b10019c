#!/usr/bin/env python
"""Time the numba kernels against their numpy twins on training-sized arrays.

    python benchmarks/bench_kernels.py [--repeat 5] [--batch 8] [--size 64]

Each kernel is checked for agreement before timing. Numba compile time is
excluded by a warm-up call.
"""
import argparse
import statistics
import time

import numpy as np

from pwfnet import runtime
from pwfnet.kernels import _numba, _numpy


def timeit(fn, args, repeat):
    fn(*args)
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def cases(B, S):
    rng = np.random.default_rng(0)
    C = 16
    x = rng.standard_normal((B, 2 * C, S, S)).astype(np.float32)
    w = rng.standard_normal((2 * C, 3, 3)).astype(np.float32)
    b = rng.standard_normal(2 * C).astype(np.float32)
    xw = rng.standard_normal((B, C, S, S)).astype(np.float32)
    K = rng.standard_normal((4, 4, 4)).astype(np.float32)
    y = rng.standard_normal((B, C, 4, S // 2, S // 2)).astype(np.float32)
    return [
        ("dw3x3_forward", (x, w, b)),
        ("dw3x3_grad_input", (x, w)),
        ("dw3x3_grad_weight", (x, x)),
        ("wav_analysis", (xw, K)),
        ("wav_synthesis", (y, K, S, S)),
        ("wav_kernel_grad", (xw, y, 4)),
        ("gelu_with_grad", (x,)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    runtime.set_threads(args.threads)

    print(f"{'kernel':<20}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'max diff':>11}")
    for name, a in cases(args.batch, args.size):
        f_np, f_nb = getattr(_numpy, name), getattr(_numba, name)
        r_np, r_nb = f_np(*a), f_nb(*a)
        if isinstance(r_np, tuple):
            diff = max(float(np.max(np.abs(p - q))) for p, q in zip(r_np, r_nb))
        else:
            diff = float(np.max(np.abs(r_np - r_nb)))
        t_np = timeit(f_np, a, args.repeat)
        t_nb = timeit(f_nb, a, args.repeat)
        print(f"{name:<20}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
