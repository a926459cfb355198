"""Grid cross-checks of the subproblem solver and both stationarity measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import evaluate, shifted_constraints
from ..stationarity import GRAD_ROW_FLOOR, chi_from_derivatives, psi_from_derivatives
from ..subproblem import QuadraticModel, solve_qk
from .grid import grid_minimize_quadratic

SLACK_FLOOR = 1e-9


@dataclass(frozen=True)
class Comparison:
    quantity: str
    point: tuple
    solver: float
    grid: float
    bound: float

    @property
    def gap(self):
        return self.grid - self.solver

    @property
    def ok(self):
        # the grid is a restriction of the continuous problem: it can only be worse
        return -SLACK_FLOOR * (1.0 + abs(self.solver)) <= self.gap <= self.bound + SLACK_FLOOR


def compare_at(instance, x, resolution, delta=1.0):
    """Solver vs grid for ``Q`` (radius ``delta``), ``-chi`` and ``-psi`` at ``x``."""
    x = np.asarray(x, dtype=float)
    _, g, H = evaluate(instance.objective, x)
    shifted = shifted_constraints(instance.polyhedron, x)
    A, b = shifted.A, shifted.b
    pt = tuple(float(v) for v in x)
    n = len(x)
    out = []

    sol = solve_qk(QuadraticModel(0.0, g, H), shifted, delta)
    gr = grid_minimize_quadratic(g, H, A, b, delta, resolution)
    out.append(Comparison("subproblem", pt, sol.q_value, gr.value, gr.bound))

    c, _ = chi_from_derivatives(g, shifted)
    gr = grid_minimize_quadratic(g, np.zeros((n, n)), A, b, 1.0, resolution)
    out.append(Comparison("chi", pt, -c, gr.value, gr.bound))

    p, _ = psi_from_derivatives(g, H, shifted)
    gn = float(np.linalg.norm(g))
    if gn >= GRAD_ROW_FLOOR:
        A = np.vstack([A, g / gn])
        b = np.concatenate([b, [0.0]])
    gr = grid_minimize_quadratic(np.zeros(n), 2.0 * H, A, b, 1.0, resolution)
    # the grid value is d.H.d here (model carries 2H with a 1/2)
    out.append(Comparison("psi", pt, -p, gr.value, gr.bound))
    return out


def sample_feasible_points(instance, count, seed=0, spread=1.0, tries=2000):
    """Rejection samples around the start point; deterministic for a seed."""
    rng = np.random.default_rng(seed)
    pts = []
    x0 = instance.start
    for _ in range(tries):
        if len(pts) >= count:
            break
        y = x0 + rng.uniform(-spread, spread, size=len(x0))
        if instance.polyhedron.contains(y, tol=0.0):
            pts.append(y)
    return pts


def verify_instance(instance, resolution, points=10, seed=0):
    comps = []
    for x in [instance.start, *sample_feasible_points(instance, points, seed)]:
        comps.extend(compare_at(instance, x, resolution))
    return comps
