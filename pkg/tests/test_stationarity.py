import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lctrace.oracle.verify import compare_at
from lctrace.problem import ObjectiveModel, Polyhedron, ProblemInstance, evaluate, shifted_constraints
from lctrace.stationarity import (
    StationarityReport,
    chi,
    chi_from_derivatives,
    is_approx_stationary,
    psi,
    report,
)
from lctrace.suite import default_suite, estimates_for, make_instance, concave_interval_instance


def unconstrained(obj, n, x0):
    return make_instance("free", obj, Polyhedron.unconstrained(n), x0, -np.ones(n), np.ones(n))


class TestChi:
    @pytest.mark.parametrize("eps", [1e-6, 1e-3, 0.1])
    def test_square_unconstrained(self, eps):
        inst = unconstrained(ObjectiveModel.from_terms(1, [(1.0, [2])]), 1, [eps])
        value, witness = chi(inst, [eps])
        assert value == pytest.approx(2 * eps, rel=1e-14)
        np.testing.assert_allclose(witness, [-1.0])

    def test_zero_gradient(self):
        inst = unconstrained(ObjectiveModel.from_terms(2, [(1.0, [2, 0]), (1.0, [0, 2])]), 2, [0.0, 0.0])
        value, witness = chi(inst, [0.0, 0.0])
        assert value == 0.0
        np.testing.assert_array_equal(witness, [0.0, 0.0])

    def test_concave_right_endpoint(self):
        value, witness = chi(concave_interval_instance(), [10.0])
        assert value == 0.0
        np.testing.assert_allclose(witness, [0.0], atol=1e-15)

    def test_concave_interior_point(self):
        value, _ = chi(concave_interval_instance(), [0.1])
        assert value == pytest.approx(0.1)


class TestPsi:
    @pytest.mark.parametrize("eps", [1e-8, 1e-4, 0.1])
    def test_concave_near_origin(self, eps):
        value, witness = psi(concave_interval_instance(), [eps])
        assert value == pytest.approx(1.0, abs=1e-8)
        np.testing.assert_allclose(witness, [1.0], atol=1e-12)

    def test_concave_right_endpoint(self):
        value, _ = psi(concave_interval_instance(), [10.0])
        assert value == pytest.approx(0.0, abs=1e-8)

    def test_psd_hessian(self, rng):
        M = rng.normal(size=(3, 3))
        inst = unconstrained(ObjectiveModel.quadratic(M @ M.T, rng.normal(size=3)), 3, np.zeros(3))
        value, witness = psi(inst, np.zeros(3))
        assert value == 0.0
        assert witness @ M @ M.T @ witness <= 1e-12

    def test_saddle_at_center(self):
        inst = unconstrained(ObjectiveModel.quadratic(np.diag([1.0, -1.0])), 2, [0.0, 0.0])
        value, witness = psi(inst, [0.0, 0.0])
        assert value == pytest.approx(1.0)
        assert abs(witness[1]) == pytest.approx(1.0)

    def test_saddle_on_top_face(self):
        # at x2 = 1 the feasible unit steps have d2 <= 0 and g.d = -d2 <= 0 forces d2 >= 0
        inst = default_suite()[2]
        value, _ = psi(inst, [0.0, 1.0])
        assert value == pytest.approx(0.0, abs=1e-12)


class TestIsApproxStationary:
    def rep(self, c, p):
        return StationarityReport(c, np.zeros(1), p, np.zeros(1), np.zeros(1))

    def test_exact_point(self):
        assert is_approx_stationary(self.rep(0.0, 0.0), 1e-12, 1e-12) == {"first_order": True, "second_order": True}

    def test_first_order_strict(self):
        assert not is_approx_stationary(self.rep(2e-3, 0.0), 1e-3, 1.0)["first_order"]

    def test_concave_point_not_second_order(self):
        r = report(concave_interval_instance(), [1e-6])
        flags = is_approx_stationary(r, 1e-4, 0.5)
        assert flags == {"first_order": True, "second_order": False}


def feasible_points(inst, count, seed):
    rng = np.random.default_rng(seed)
    n = inst.objective.dimension
    upper, lower = inst.polyhedron.b[:n], -inst.polyhedron.b[n : 2 * n]
    pts = [x for x in rng.uniform(lower, upper, size=(20 * count, n)) if inst.polyhedron.contains(x)]
    return pts[:count]


SUITE = default_suite()


class TestProperties:
    @pytest.mark.parametrize("inst", SUITE, ids=lambda i: i.name)
    def test_nonnegative_and_witness_valid(self, inst):
        for x in feasible_points(inst, 5, 0) + [inst.start]:
            r = report(inst, x)
            _, g, H = evaluate(inst.objective, x)
            assert r.chi >= 0.0 and r.psi >= 0.0
            for w in (r.chi_witness, r.psi_witness):
                assert np.linalg.norm(w) <= 1 + 1e-9
                assert inst.polyhedron.contains(x + w)
            assert g @ r.psi_witness <= 1e-8
            assert -g @ r.chi_witness == pytest.approx(r.chi, abs=1e-10)
            assert -r.psi_witness @ H @ r.psi_witness == pytest.approx(r.psi, abs=1e-10)

    @pytest.mark.parametrize("inst", [i for i in SUITE if i.objective.dimension <= 3][:8], ids=lambda i: i.name)
    def test_grid_equivalence(self, inst):
        for x in feasible_points(inst, 2, 1):
            for c in compare_at(inst, x, 2e-2 if inst.objective.dimension == 3 else 5e-3):
                if c.quantity != "subproblem":
                    assert c.ok, c

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_zero_at_interior_convex_minimum(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(2, 2))
        H = M @ M.T + 0.1 * np.eye(2)
        xstar = rng.uniform(-0.5, 0.5, size=2)
        obj = ObjectiveModel.quadratic(H, -H @ xstar)
        poly = Polyhedron.box([-1, -1], [1, 1])
        inst = ProblemInstance(obj, poly, estimates_for(obj, [-1, -1], [1, 1]), xstar)
        r = report(inst, xstar)
        assert r.chi <= 1e-8 and r.psi <= 1e-8

    def test_chi_scales_with_gradient(self):
        box = Polyhedron.box([-1, -1], [1, 1])
        sh = shifted_constraints(box, np.array([0.2, -0.3]))
        g = np.array([0.3, -1.1])
        c1, _ = chi_from_derivatives(g, sh)
        c3, _ = chi_from_derivatives(3 * g, sh)
        assert c3 == pytest.approx(3 * c1, rel=1e-12)
