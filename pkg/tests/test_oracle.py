import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lctrace.lc_trace import SolverConfig, finalize_ledger, run_first_order
from lctrace.oracle import (
    BACKEND,
    GridTooLarge,
    evaluate_budgets,
    finite_difference_check,
    grid_minimize,
    grid_minimize_quadratic,
    scaling_fit,
)
from lctrace.oracle import _grid_fallback
from lctrace.oracle.budgets import k_delta, k_sigma
from lctrace.oracle.verify import compare_at, verify_instance
from lctrace.problem import Estimates, ObjectiveModel
from lctrace.suite import box_saddle_instance, default_suite, example_region_polyhedron, concave_interval_instance

try:
    from lctrace.oracle import _grid_kernel
except ImportError:
    _grid_kernel = None


def random_region(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    m = int(rng.integers(0, 5))
    M = rng.normal(size=(n, n))
    A = rng.normal(size=(m, n))
    if m:
        A /= np.linalg.norm(A, axis=1, keepdims=True)
    radius = float(rng.uniform(0.5, 2.0))
    return rng.normal(size=n), M + M.T, A.reshape(m, n), rng.uniform(0.3, 1.0, size=m) * radius, radius


class TestGrid:
    def test_square_on_interval(self):
        res = grid_minimize(lambda p: p[:, 0] ** 2, lambda p: np.ones(len(p), bool), 1, 1.0, 1e-3, lipschitz=2.0)
        assert abs(res.value) <= 1e-6
        assert abs(res.point[0]) <= 1e-6
        assert res.bound == pytest.approx(2e-3)

    def test_example_region_regularized(self):
        # (1 + 0.5) s1^2 + (0.5 - 1) s2^2 is 0.5 s.diag(3, -1).s
        poly = example_region_polyhedron()
        res = grid_minimize_quadratic(np.zeros(2), np.diag([3.0, -1.0]), poly.A, poly.b, 10.0, 1e-3)
        assert abs(res.value - 24.0) <= 2e-3

    def test_psi_on_concave_interval_instance(self):
        # d.H.d with H = -1 over d in [0, 1] (feasible and non-ascent)
        res = grid_minimize_quadratic(np.zeros(1), np.array([[-2.0]]), np.array([[1.0], [-1.0]]), np.array([10.0, 0.0]), 1.0, 1e-3)
        assert res.value == pytest.approx(-1.0, abs=res.bound)

    def test_generic_and_sweep_agree(self):
        g, H, A, b, r = random_region(3)
        n = len(g)
        q = lambda p: p @ g + 0.5 * np.einsum("ij,jk,ik->i", p, H, p)
        member = (lambda p: np.all(p @ A.T <= b, axis=1)) if len(b) else (lambda p: np.ones(len(p), bool))
        a = grid_minimize(q, member, n, r, 2e-2)
        c = grid_minimize_quadratic(g, H, A, b, r, 2e-2)
        assert a.value == pytest.approx(c.value, abs=1e-12)

    def test_dimension_guard(self):
        with pytest.raises(GridTooLarge):
            grid_minimize_quadratic(np.zeros(5), np.eye(5), np.zeros((0, 5)), np.zeros(0), 1.0, 0.1)
        with pytest.raises(GridTooLarge):
            grid_minimize(lambda p: p[:, 0], lambda p: np.ones(len(p), bool), 3, 1.0, 1e-4)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_halving_resolution(self, seed):
        g, H, A, b, r = random_region(seed)
        coarse = grid_minimize_quadratic(g, H, A, b, r, 0.1)
        fine = grid_minimize_quadratic(g, H, A, b, r, 0.05)
        assert fine.value <= coarse.value + 1e-12
        assert coarse.value - fine.value <= coarse.bound


@pytest.mark.skipif(_grid_kernel is None, reason="compiled kernel not built")
class TestBackends:
    def test_active_backend(self):
        assert BACKEND == ("python" if os.environ.get("LCTRACE_PURE_PYTHON") else "cython")

    @pytest.mark.parametrize("seed", range(30))
    def test_parity(self, seed):
        g, H, A, b, r = random_region(seed)
        a = _grid_kernel.sweep_quadratic(g, H, A, b, r, 0.02)
        c = _grid_fallback.sweep_quadratic(g, H, A, b, r, 0.02)
        assert a[0] == c[0]
        np.testing.assert_array_equal(a[1], c[1])


class TestBudgets:
    def test_sigma_term(self):
        assert k_sigma(1.0, 0.1, 0.25, 0.75, 1.0) == 10

    def test_delta_term(self):
        assert k_delta(1.0, 0.1, 1.0) == 10

    def test_composition(self):
        est = Estimates(1.0, 1.0, 1.0, 1.0, -1.0)
        cfg = SolverConfig(epsilon=1e-2)
        b = evaluate_budgets(finalize_ledger(cfg, est, 0.5), cfg, est, 0.0)
        assert b.k_total == 1 + (b.k_sigma + b.k_delta) * (1 + b.k_c * b.k_c1)
        assert min(b.k_sigma, b.k_delta, b.k_c, b.k_c1) >= 0

    @given(st.floats(1e-6, 1.0), st.floats(1.01, 100.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_eps(self, eps, factor):
        est = Estimates(2.0, 3.0, 3.0, 1.0, -5.0)
        cfg = SolverConfig()
        led = finalize_ledger(cfg, est, 0.3)
        small = evaluate_budgets(led, cfg, est, 1.0, eps)
        large = evaluate_budgets(led, cfg, est, 1.0, min(eps * factor, 10.0))
        assert large.k_total <= small.k_total

    @pytest.mark.parametrize("inst", default_suite(), ids=lambda i: i.name)
    def test_budget_covers_observed_solves(self, inst):
        cfg = SolverConfig()
        res = run_first_order(inst, cfg)
        led = finalize_ledger(cfg, inst.estimates, res.header["ledger"]["lambda0"])
        b = evaluate_budgets(led, cfg, inst.estimates, float(inst.objective.value(inst.start)))
        assert math.isfinite(b.k_total)
        assert res.summary["subproblem_solves"] <= b.k_total


class TestScaling:
    def test_exact_power(self):
        eps = [1e-1, 1e-2, 1e-3, 1e-4]
        assert scaling_fit([(e, 7.0 * e**-1.5) for e in eps]) == pytest.approx(1.5, abs=1e-6)

    def test_constant(self):
        assert scaling_fit([(e, 4) for e in (1e-1, 1e-2, 1e-3)]) == 0.0

    def test_needs_three_tolerances(self):
        with pytest.raises(ValueError):
            scaling_fit([(1e-1, 3), (1e-2, 5), (1e-2, 6)])


class TestFiniteDifferences:
    def test_half_square(self):
        assert finite_difference_check(ObjectiveModel.from_terms(1, [(0.5, [2])]), [[2.0]]) <= 1e-8

    def test_concave_interval(self):
        assert finite_difference_check(concave_interval_instance().objective, [[1e-3], [5.0]]) <= 1e-8

    def test_detects_wrong_gradient(self):
        class Broken:
            def __init__(self, m):
                self.m = m

            def value(self, x):
                return self.m.value(x)

            def gradient(self, x):
                return 1.01 * self.m.gradient(x)

            def hessian(self, x):
                return self.m.hessian(x)

        assert finite_difference_check(Broken(box_saddle_instance().objective), [[0.5, 0.3]]) > 1e-3


class TestVerify:
    def test_start_point_comparisons(self):
        comps = compare_at(box_saddle_instance(), np.array([0.5, 0.0]), 1e-2)
        assert [c.quantity for c in comps] == ["subproblem", "chi", "psi"]
        assert all(c.ok for c in comps)

    @pytest.mark.parametrize("inst", default_suite()[:4], ids=lambda i: i.name)
    def test_instances(self, inst):
        comps = verify_instance(inst, 1e-2, points=3)
        assert comps and all(c.ok for c in comps)
