"""Deterministic test-problem suite.

All instances live on bounded polytopes in dimension at most three, so the
estimates can be derived from valid polynomial bounds over a bounding box.
"""

from __future__ import annotations

import numpy as np

from .problem import Estimates, ObjectiveModel, Polyhedron, ProblemInstance, polynomial_bounds

H_LIP_FLOOR = 1e-6


def estimates_for(objective, lower, upper):
    """Valid estimates over the box ``[lower, upper]`` containing the feasible set."""
    bd = polynomial_bounds(objective, lower, upper)
    H_max = max(bd["H_max"], 1e-6)
    return Estimates(
        g_max=max(bd["g_max"], 1e-6),
        H_max=H_max,
        g_lip=H_max,
        H_lip=max(bd["H_lip"], H_LIP_FLOOR),
        f_min=-bd["f_abs"],
    )


def make_instance(name, objective, poly, start, lower, upper):
    return ProblemInstance(objective, poly, estimates_for(objective, lower, upper), np.asarray(start, float), name)


def concave_interval_instance(x0=0.1):
    """``f(x) = -x**2 / 2`` on ``[0, 10]``; the origin is a first-order point only."""
    obj = ObjectiveModel.quadratic([[-1.0]])
    poly = Polyhedron.box([0.0], [10.0])
    return make_instance(f"concave_x{x0:g}", obj, poly, [x0], [0.0], [10.0])


def box_saddle_instance(start=(0.5, 0.0)):
    """``f = x1**2 / 2 - x2**2 / 2`` on ``[-1, 1]**2``."""
    obj = ObjectiveModel.quadratic(np.diag([1.0, -1.0]))
    poly = Polyhedron.box([-1.0, -1.0], [1.0, 1.0])
    return make_instance("box_saddle", obj, poly, start, [-1.0, -1.0], [1.0, 1.0])


def example_region_polyhedron():
    """The three-row region ``s1 <= 5, s2 >= 0, s2 - 3 s1 <= -12``."""
    A = np.array([[1.0, 0.0], [0.0, -1.0], [-3.0, 1.0]])
    b = np.array([5.0, 0.0, -12.0])
    return Polyhedron(A, b)


def _random_cuts(rng, n, start, half, count):
    rows, rhs = [], []
    for _ in range(count):
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        margin = rng.uniform(0.3, 0.8) * half
        rows.append(a)
        rhs.append(float(a @ start) + margin)
    return rows, rhs


def _polytope(rng, n, start, half, cuts):
    lower = -half * np.ones(n)
    upper = half * np.ones(n)
    box = Polyhedron.box(lower, upper)
    rows, rhs = _random_cuts(rng, n, start, half, cuts)
    if rows:
        A = np.vstack([box.A, np.array(rows)])
        b = np.concatenate([box.b, rhs])
    else:
        A, b = box.A, box.b
    return Polyhedron(A, b), lower, upper


def random_quadratic_instance(seed, n, convex=False, cuts=1, half=2.0):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    H = 0.5 * (M + M.T)
    if convex:
        H = M @ M.T / n + 0.5 * np.eye(n)
    g = rng.normal(size=n)
    obj = ObjectiveModel.quadratic(H, g, 0.0)
    start = rng.uniform(-0.3, 0.3, size=n) * half
    poly, lo, hi = _polytope(rng, n, start, half, cuts)
    kind = "convex" if convex else "indef"
    return make_instance(f"quad_{kind}_n{n}_s{seed}", obj, poly, start, lo, hi)


def random_quartic_instance(seed, n, cuts=1, half=1.5):
    """Coercive quartic plus a random indefinite quadratic and cubic cross terms."""
    rng = np.random.default_rng(seed)
    terms = []
    for i in range(n):
        e = [0] * n
        e[i] = 4
        terms.append((float(rng.uniform(0.2, 1.0)), e))
        e = [0] * n
        e[i] = 1
        terms.append((float(rng.normal()), e))
        e = [0] * n
        e[i] = 2
        terms.append((float(rng.normal()), e))
    for i in range(n):
        for j in range(i + 1, n):
            e = [0] * n
            e[i], e[j] = 1, 1
            terms.append((float(rng.normal()), e))
            e = [0] * n
            e[i], e[j] = 2, 1
            terms.append((float(0.3 * rng.normal()), e))
    obj = ObjectiveModel.from_terms(n, terms)
    start = rng.uniform(-0.3, 0.3, size=n) * half
    poly, lo, hi = _polytope(rng, n, start, half, cuts)
    return make_instance(f"quartic_n{n}_s{seed}", obj, poly, start, lo, hi)


def rosenbrock_box_instance():
    # (1 - x)^2 + 10 (y - x^2)^2 on [-1.5, 1.5]^2, from (-1.2, 1)
    terms = [
        (1.0, [0, 0]),
        (-2.0, [1, 0]),
        (1.0, [2, 0]),
        (10.0, [0, 2]),
        (-20.0, [2, 1]),
        (10.0, [4, 0]),
    ]
    obj = ObjectiveModel.from_terms(2, terms)
    lo, hi = [-1.5, -1.5], [1.5, 1.5]
    return make_instance("rosenbrock_box", obj, Polyhedron.box(lo, hi), [-1.2, 1.0], lo, hi)


def default_suite():
    """Twenty-four instances used by the invariant and budget checks."""
    out = [
        concave_interval_instance(9.0),
        concave_interval_instance(0.1),
        box_saddle_instance(),
        rosenbrock_box_instance(),
    ]
    for seed in range(4):
        out.append(random_quadratic_instance(100 + seed, 2, convex=True, cuts=seed % 2))
    for seed in range(6):
        out.append(random_quadratic_instance(200 + seed, 2 + seed % 2, convex=False, cuts=seed % 3))
    for seed in range(6):
        out.append(random_quartic_instance(300 + seed, 2 + seed % 2, cuts=seed % 2))
    for seed in range(4):
        out.append(random_quadratic_instance(400 + seed, 3, convex=False, cuts=2))
    return out


def nonconvex_suite():
    """Fixed nonconvex instances for the iteration-count scaling fit."""
    out = [box_saddle_instance(), rosenbrock_box_instance()]
    for seed in range(3):
        out.append(random_quadratic_instance(500 + seed, 2, convex=False, cuts=1))
    for seed in range(3):
        out.append(random_quartic_instance(600 + seed, 2, cuts=1))
    return out
