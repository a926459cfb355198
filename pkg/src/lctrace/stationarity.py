"""First- and second-order stationarity measures over a polyhedron.

``chi(x) = -min g.s`` over feasible unit steps, and
``psi(x) = -min d.H.d`` over feasible unit steps with ``g.d <= 0``.
Both reduce to a single call of the exact subproblem solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Polyhedron, evaluate, shifted_constraints
from .subproblem import QuadraticModel, solve_qk

GRAD_ROW_FLOOR = 1e-12


@dataclass(frozen=True)
class StationarityReport:
    chi: float
    chi_witness: np.ndarray
    psi: float
    psi_witness: np.ndarray
    computed_at: np.ndarray


def chi_from_derivatives(g, shifted):
    """``chi`` given the gradient and the shifted polyhedron of feasible steps."""
    g = np.asarray(g, dtype=float)
    n = len(g)
    if not np.any(g):
        return 0.0, np.zeros(n)
    sol = solve_qk(QuadraticModel(0.0, g, np.zeros((n, n))), shifted, 1.0)
    return max(-float(g @ sol.s), 0.0) + 0.0, sol.s


def psi_from_derivatives(g, H, shifted):
    """``psi`` given gradient, Hessian and the shifted polyhedron."""
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    n = len(g)
    A, b = shifted.A, shifted.b
    gn = float(np.linalg.norm(g))
    if gn >= GRAD_ROW_FLOOR:
        # non-ascent halfspace, normalized so its slack scale matches the others
        A = np.vstack([A.reshape(-1, n), g / gn])
        b = np.concatenate([b, [0.0]])
    poly = Polyhedron(A, b)
    sol = solve_qk(QuadraticModel(0.0, np.zeros(n), 2.0 * H), poly, 1.0)
    d = sol.s
    return max(-float(d @ H @ d), 0.0) + 0.0, d


def chi(instance, x):
    """First-order measure at a feasible ``x``; returns ``(value, witness)``."""
    x = np.asarray(x, dtype=float)
    _, g, _ = evaluate(instance.objective, x)
    return chi_from_derivatives(g, shifted_constraints(instance.polyhedron, x))


def psi(instance, x):
    """Second-order measure at a feasible ``x``; returns ``(value, witness)``."""
    x = np.asarray(x, dtype=float)
    _, g, H = evaluate(instance.objective, x)
    return psi_from_derivatives(g, H, shifted_constraints(instance.polyhedron, x))


def report(instance, x):
    x = np.asarray(x, dtype=float)
    _, g, H = evaluate(instance.objective, x)
    shifted = shifted_constraints(instance.polyhedron, x)
    c, cw = chi_from_derivatives(g, shifted)
    p, pw = psi_from_derivatives(g, H, shifted)
    return StationarityReport(c, cw, p, pw, x.copy())


def is_approx_stationary(rep, eps_g, eps_H):
    first = rep.chi <= eps_g
    return {"first_order": bool(first), "second_order": bool(first and rep.psi <= eps_H)}
