#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

The shapes mirror what candidate evaluation actually pushes through the
kernels (activations of a batch-8, length-16, width-32/128 student).

    python3 benchmarks/bench_kernels.py [--repeats 2000]
"""

import argparse
import timeit

import numpy as np

from ffnas.kernels import numba_ops, numpy_ops

SHAPES = {
    "elementwise 4k": (np.random.default_rng(0).normal(size=4096),),
    "elementwise 64k": (np.random.default_rng(1).normal(size=65536),),
}
ROWS = {
    "rows 128x32": np.random.default_rng(2).normal(size=(128, 32)),
    "rows 512x128": np.random.default_rng(3).normal(size=(512, 128)),
}


def bench(fn, args, repeats):
    fn(*args)  # jit warm-up / first-touch
    return timeit.timeit(lambda: fn(*args), number=repeats) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    n = args.repeats

    print(f"{'kernel':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    print("-" * 62)

    for label, data in SHAPES.items():
        for name in ("gelu_fwd", "swish_fwd", "elu_fwd", "tanh_fwd"):
            t_np = bench(getattr(numpy_ops, name), data, n)
            t_nb = bench(getattr(numba_ops, name), data, n)
            print(f"{name} {label:<18}{t_np * 1e6:>10.1f}us"
                  f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.2f}x")

    for label, x in ROWS.items():
        for name in ("softmax_fwd", "log_softmax_fwd"):
            t_np = bench(getattr(numpy_ops, name), (x,), n)
            t_nb = bench(getattr(numba_ops, name), (x,), n)
            print(f"{name} {label:<14}{t_np * 1e6:>10.1f}us"
                  f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.2f}x")
        gamma = np.ones(x.shape[1])
        beta = np.zeros(x.shape[1])
        t_np = bench(numpy_ops.layer_norm_fwd, (x, gamma, beta, 1e-12), n)
        t_nb = bench(numba_ops.layer_norm_fwd, (x, gamma, beta, 1e-12), n)
        print(f"layer_norm_fwd {label:<11}{t_np * 1e6:>10.1f}us"
              f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.2f}x")

    rng = np.random.default_rng(4)
    p = rng.normal(size=(128, 128))
    g = rng.normal(size=(128, 128))
    adam_args = (1e-3, 0.9, 0.999, 1e-8, 0.01, 0.5, 0.5)

    def run_adam(ops):
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        pc = p.copy()
        ops.adam_update(pc, g, m, v, *adam_args)
        return timeit.timeit(
            lambda: ops.adam_update(pc, g, m, v, *adam_args), number=n) / n

    t_np, t_nb = run_adam(numpy_ops), run_adam(numba_ops)
    print(f"{'adam_update 128x128':<26}{t_np * 1e6:>10.1f}us"
          f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.2f}x")


if __name__ == "__main__":
    main()
