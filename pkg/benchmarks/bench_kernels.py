"""Compare the numba and numpy backends of the hot kernels.

    python3 benchmarks/bench_kernels.py [--paths 2000] [--n 4096] [--repeat 5]

Prints best-of-``repeat`` wall times per kernel and the max absolute
difference between the backends. With ``LINFBM_DISABLE_NUMBA=1`` only the
numpy column is timed.
"""

import argparse
import time

import numpy as np

from linfbm import kernels
from linfbm._accel import NUMBA_ENABLED


def _inputs(n_paths, n, rng):
    t = np.linspace(0.0, 1.0, n)
    b = np.cumsum(rng.standard_normal((n_paths, n)) / np.sqrt(n), axis=1)
    b[:, 0] = 0.0
    f = np.exp(-t)
    w = np.full(n - 1, 1e-3)
    start = np.zeros(1)
    c = np.full(n, 0.5)
    z0 = np.full(n_paths, 0.1)
    k = min(n, 512)
    mt = np.triu(rng.standard_normal((k, k)))
    return {
        "fixed_order_matmul": ((b[:, :k], mt, True),),
        "left_point_integral": ((f, b),),
        "trapezoid_cumulative": ((b, t),),
        "flow_recursion": ((b, w, start),),
        "bessel_recursion": ((b, t, c, z0),),
        "reflection_push": ((b,),),
    }


def _best(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    cases = _inputs(args.paths, args.n, rng)
    print(f"paths={args.paths} n={args.n} numba={'on' if NUMBA_ENABLED else 'off'}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (fargs,) in cases.items():
        t_np, out_np = _best(getattr(kernels, f"{name}_np"), fargs, args.repeat)
        if NUMBA_ENABLED:
            nb = getattr(kernels, f"{name}_nb")
            nb(*fargs)  # compile outside the timing
            t_nb, out_nb = _best(nb, fargs, args.repeat)
            diff = float(np.max(np.abs(out_np - out_nb)))
            print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}{diff:>14.2e}")
        else:
            print(f"{name:<22}{t_np:>12.4f}{'-':>12}{'-':>10}{'-':>14}")


if __name__ == "__main__":
    main()
