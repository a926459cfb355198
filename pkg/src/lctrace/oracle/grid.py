"""Brute-force grid oracles for small dimensions.

Two entry points:

``grid_minimize``
    generic vectorized evaluation of a callable over the grid points of the
    ball's bounding box that pass a membership test;
``grid_minimize_quadratic``
    exact grid minimum of a quadratic over ball and polyhedron via a line
    sweep (compiled kernel when available).

The accuracy bound ``Lip * resolution * sqrt(n)`` is valid when the
feasible region contains a grid point within ``resolution * sqrt(n)`` of the
continuous minimizer, which holds for regions that are not thinner than the
grid spacing.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

if os.environ.get("LCTRACE_PURE_PYTHON"):
    from ._grid_fallback import sweep_quadratic as _sweep

    BACKEND = "python"
else:
    try:
        from ._grid_kernel import sweep_quadratic as _sweep

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._grid_fallback import sweep_quadratic as _sweep

        BACKEND = "python"

MAX_DIM = 4
MAX_POINTS = 50_000_000


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class GridResult:
    value: float
    point: np.ndarray
    bound: float
    evaluated: int


def _guard(n, radius, resolution, max_points):
    if n > MAX_DIM:
        raise GridTooLarge(f"grid oracle supports n <= {MAX_DIM}, got {n}")
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    per_axis = 2 * math.floor(radius / resolution) + 1
    if per_axis**n > max_points:
        raise GridTooLarge(f"{per_axis}^{n} grid points exceed the budget of {max_points}")
    return per_axis


def grid_minimize(objective, member, n, radius, resolution, lipschitz=None, max_points=MAX_POINTS, chunk=1 << 20):
    """Minimize ``objective`` over grid points of the ``radius`` ball passing ``member``.

    Parameters
    ----------
    objective, member : callable
        Vectorized over an ``(N, n)`` array of points; return values and a
        boolean mask.
    n : int
        Dimension.
    radius, resolution : float
        Ball radius and grid spacing.
    lipschitz : float, optional
        Lipschitz constant of ``objective`` on the ball, used for the
        reported accuracy bound.
    """
    per_axis = _guard(n, radius, resolution, max_points)
    N = per_axis // 2
    ticks = np.arange(-N, N + 1) * resolution
    total = per_axis**n
    best, best_pt, evaluated = math.inf, None, 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        pts = np.empty((len(idx), n))
        rest = idx
        for j in range(n - 1, -1, -1):
            pts[:, j] = ticks[rest % per_axis]
            rest = rest // per_axis
        keep = np.einsum("ij,ij->i", pts, pts) <= radius * radius * (1.0 + 1e-12)
        pts = pts[keep]
        if len(pts) == 0:
            continue
        pts = pts[np.asarray(member(pts), dtype=bool)]
        if len(pts) == 0:
            continue
        vals = np.asarray(objective(pts), dtype=float)
        evaluated += len(pts)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_pt = float(vals[i]), pts[i].copy()
    bound = math.nan if lipschitz is None else lipschitz * resolution * math.sqrt(n)
    return GridResult(best, best_pt, bound, evaluated)


def quadratic_lipschitz(g, H, radius):
    return float(np.linalg.norm(g) + np.linalg.norm(np.asarray(H, dtype=float), 2) * radius)


def grid_minimize_quadratic(g, H, A, b, radius, resolution, f0=0.0):
    """Exact grid minimum of ``f0 + g.s + 0.5 s.H.s`` over ``{A s <= b, ||s|| <= radius}``."""
    g = np.asarray(g, dtype=float).reshape(-1)
    n = len(g)
    if n > MAX_DIM:
        raise GridTooLarge(f"grid oracle supports n <= {MAX_DIM}, got {n}")
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    H = np.asarray(H, dtype=float).reshape(n, n)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    value, point, lines = _sweep(g, H, A, np.asarray(b, dtype=float), float(radius), float(resolution))
    bound = quadratic_lipschitz(g, H, radius) * resolution * math.sqrt(n)
    return GridResult(float(value) + f0, np.asarray(point), bound, int(lines))
