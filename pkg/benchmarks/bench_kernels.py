"""Time the numba and numpy routes of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--samples 10 200 2000]

Shapes follow the toy networks: a 1000 x 1000 hidden-to-hidden layer and a
reference batch of ``samples`` rows. The first numba call (JIT compile or
cache load) is timed separately.
"""
import argparse
import timeit

import numpy as np

from lrprune import _kernels


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, nargs="+", default=[10, 200, 2000])
    ap.add_argument("--width", type=int, default=1000)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    w = rng.uniform(-0.05, 0.05, (args.width, args.width))
    b = np.zeros(args.width)

    a0 = np.maximum(rng.normal(size=(2, args.width)), 0)
    r0 = rng.random((2, args.width))
    t0 = timeit.default_timer()
    _kernels.lrp_dense_numba(a0, w, r0, 1e-9)
    _kernels.dense_ordered_numba(a0, w, b)
    print(f"numba first call (compile or cache load): {timeit.default_timer() - t0:.3f}s")
    print(f"{'kernel':<14}{'N':>6}{'numpy ms':>11}{'numba ms':>11}{'ratio':>8}  max|diff|")

    for n in args.samples:
        a = np.maximum(rng.normal(size=(n, args.width)), 0)
        r = rng.random((n, args.width))
        pairs = {
            "lrp_dense": (lambda: _kernels.lrp_dense_numpy(a, w, r, 1e-9),
                          lambda: _kernels.lrp_dense_numba(a, w, r, 1e-9)),
            "dense_ordered": (lambda: _kernels.dense_ordered_numpy(a, w, b),
                              lambda: _kernels.dense_ordered_numba(a, w, b)),
        }
        for name, (np_fn, nb_fn) in pairs.items():
            t_np, t_nb = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
            x, y = np_fn(), nb_fn()
            diff = np.abs(x[0] - y[0]).max() if isinstance(x, tuple) else np.abs(x - y).max()
            print(f"{name:<14}{n:>6}{1e3 * t_np:>11.2f}{1e3 * t_nb:>11.2f}{t_np / t_nb:>8.2f}  {diff:.1e}")
        t_blas = best_of(lambda: a @ w + b, args.repeat)
        print(f"{'blas matmul':<14}{n:>6}{1e3 * t_blas:>11.2f}{'':>11}{'':>8}  (reference)")


if __name__ == "__main__":
    main()
