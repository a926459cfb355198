"""Compiled vs pure-Python grid sweep.

Usage::

    python3 benchmarks/bench_grid.py [--resolution 0.01] [--repeat 3]

Both backends run on the same random quadratics; the values must agree to
the last bit and the script reports the median wall time per backend.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from lctrace.oracle import _grid_fallback

try:
    from lctrace.oracle import _grid_kernel
except ImportError:  # extension not built
    _grid_kernel = None


def problems(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(1, 5))
        M = rng.normal(size=(n, n))
        A = rng.normal(size=(m, n))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        yield rng.normal(size=n), M + M.T, A, rng.uniform(0.3, 1.0, size=m), 1.0


def timed(fn, cases, h, repeat):
    times, values = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        values = [fn(g, H, A, b, r, h)[0] for g, H, A, b, r in cases]
        times.append(time.perf_counter() - t0)
    return statistics.median(times), values


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--resolution", type=float, default=1e-2)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    cases = list(problems(args.seed, args.count))
    t_py, v_py = timed(_grid_fallback.sweep_quadratic, cases, args.resolution, args.repeat)
    print(f"python  {t_py:9.4f} s")
    if _grid_kernel is None:
        print("cython  not built")
        return 0
    t_cy, v_cy = timed(_grid_kernel.sweep_quadratic, cases, args.resolution, args.repeat)
    print(f"cython  {t_cy:9.4f} s  speedup x{t_py / t_cy:.1f}")
    diff = max(abs(a - b) for a, b in zip(v_py, v_cy))
    print(f"max value difference {diff:.3e}")
    return 0 if diff <= 1e-12 else 1


if __name__ == "__main__":
    raise SystemExit(main())
