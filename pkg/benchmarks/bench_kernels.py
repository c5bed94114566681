"""Benchmark the hot kernels: numba loops vs the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each kernel is timed on
both backends after a warm-up call (which also triggers compilation), and
the outputs are compared so a speed-up never hides a wrong answer.
"""

import argparse
import math
import time

import numpy as np

from bosonic_moe import _kernels
from bosonic_moe.critical import CONSTANT_TOL, geometric_mu


def timed(fn, repeat):
    fn()  # warm-up / compile
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_dopri5(dim, repeat):
    up, down = _kernels.birth_death_rates(1.0, 0.5, dim)
    y0 = np.zeros(dim + 1)
    y0[:dim] = 0.5 ** np.arange(1, dim + 1)
    y0[0] += 1.0 - y0[:dim].sum()
    h0 = 0.5 / float(np.max(up + down))
    rows = {}
    for be in ("numba", "numpy"):
        rows[be] = timed(lambda: _kernels.dopri5(y0, up, down, 0.4, 1e-12, h0, 10**7, be), repeat)
    diff = float(np.max(np.abs(rows["numba"][1][0] - rows["numpy"][1][0])))
    return rows["numba"][0], rows["numpy"][0], diff


def bench_scan(n_seeds, n_max, repeat):
    gp, gm = 1.0, 0.0
    mu0 = geometric_mu(gp, gm, 0.5)
    rng = np.random.default_rng(0)
    w0 = np.log(rng.uniform(1e-3, 0.999, n_seeds))
    mu = mu0 + rng.uniform(-2.0, 2.0, n_seeds)
    rows = {}
    for be in ("numba", "numpy"):
        rows[be] = timed(lambda: _kernels.scan(w0, mu, gp, gm, n_max, CONSTANT_TOL, be), repeat)
    a, b = rows["numba"][1], rows["numpy"][1]
    same = all(np.array_equal(x, y) for x, y in zip(a[:2], b[:2]))
    H_a, H_b = a[3], b[3]
    mask = np.isfinite(H_a)
    diff = float(np.max(np.abs(H_a[mask] - H_b[mask]), initial=0.0))
    return rows["numba"][0], rows["numpy"][0], diff if same else math.inf


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}{'max diff':>12}")
    for dim in (64, 256, 1024):
        nb, npy, d = bench_dopri5(dim, args.repeat)
        print(f"{'dopri5 dim=' + str(dim):<28}{nb * 1e3:12.2f}{npy * 1e3:12.2f}{npy / nb:10.1f}{d:12.1e}")
    for n in (1_000, 20_000):
        nb, npy, d = bench_scan(n, 2000, args.repeat)
        print(f"{'recursion scan n=' + str(n):<28}{nb * 1e3:12.2f}{npy * 1e3:12.2f}{npy / nb:10.1f}{d:12.1e}")


if __name__ == "__main__":
    main()
