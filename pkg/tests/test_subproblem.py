import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lctrace.oracle import grid_minimize_quadratic
from lctrace.problem import Polyhedron
from lctrace.subproblem import (
    FACE_CAP,
    TAU_KKT,
    FaceBudgetExceeded,
    KKTResiduals,
    QuadraticModel,
    SubproblemSolution,
    collect_solutions,
    kkt_residual,
    recession_cone_trivial,
    solve_equality_trs,
    solve_qk,
    solve_qk_lambda,
)


def sphere_samples(n, count, seed):
    v = np.random.default_rng(seed).normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_problem(seed, n=None, m=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 4))
    m = int(rng.integers(0, 5)) if m is None else m
    M = rng.normal(size=(n, n))
    A = rng.normal(size=(m, n))
    if m:
        A /= np.linalg.norm(A, axis=1, keepdims=True)
    delta = float(rng.uniform(0.5, 5.0))
    b = rng.uniform(0.3, 1.0, size=m) * delta
    return QuadraticModel(0.0, rng.normal(size=n), M + M.T), Polyhedron(A.reshape(m, n), b), delta


class TestSolveQk:
    def test_convex_interior_minimum_is_origin(self):
        poly = Polyhedron(np.array([[1.0, 1.0]]), np.array([1.0]))
        sol = solve_qk(QuadraticModel(0.0, np.zeros(2), np.eye(2)), poly, 3.0)
        np.testing.assert_array_equal(sol.s, [0.0, 0.0])
        assert sol.lambda_tr == 0.0
        np.testing.assert_array_equal(sol.lambda_lin, [0.0])

    def test_negative_square_ball(self):
        # q = -s^2 is H = -2 here, so (H + lam) s = 0 needs lam = 2
        sol = solve_qk(QuadraticModel(0.0, [0.0], [[-2.0]]), Polyhedron.unconstrained(1), 1.0)
        np.testing.assert_allclose(sol.s, [-1.0])
        assert sol.q_value == pytest.approx(-1.0)
        assert sol.lambda_tr == pytest.approx(2.0, abs=1e-12)
        assert sol.tie_fired
        np.testing.assert_allclose(sol.ties[0][0], [1.0])

    def test_negative_half_square_ball(self):
        sol = solve_qk(QuadraticModel(0.0, [0.0], [[-1.0]]), Polyhedron.unconstrained(1), 1.0)
        np.testing.assert_allclose(sol.s, [-1.0])
        assert sol.lambda_tr == pytest.approx(1.0, abs=1e-12)

    def test_example_region_against_grid(self, example_model, example_poly):
        sol = solve_qk(example_model, example_poly, 10.0)
        grid = grid_minimize_quadratic(example_model.g, example_model.H, example_poly.A, example_poly.b, 10.0, 1e-3)
        assert abs(sol.q_value - grid.value) <= 2e-3
        np.testing.assert_allclose(sol.s, [4.0, 0.0], atol=1e-12)

    def test_face_cap(self):
        A = np.vstack([np.eye(2)] * 7)[: FACE_CAP + 1]
        with pytest.raises(FaceBudgetExceeded):
            solve_qk(QuadraticModel(0.0, [1.0, 1.0], np.eye(2)), Polyhedron(A, np.ones(FACE_CAP + 1)), 1.0)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            solve_qk(QuadraticModel(0.0, [1.0], [[1.0]]), Polyhedron.unconstrained(1), 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_without_constraints_matches_trs(self, seed):
        model, _, delta = random_problem(seed, m=0)
        sol = solve_qk(model, Polyhedron.unconstrained(model.n), delta)
        best = min(c.q_value for c in solve_equality_trs(model.H, model.g, delta))
        assert sol.q_value == pytest.approx(best, abs=1e-10)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_kkt_and_feasibility(self, seed):
        model, poly, delta = random_problem(seed)
        sol = solve_qk(model, poly, delta)
        assert sol.kkt.worst() <= TAU_KKT
        assert sol.norm <= delta * (1 + 1e-12) + 1e-9
        assert poly.contains(sol.s)
        assert np.all(sol.lambda_lin >= 0.0) and sol.lambda_tr >= 0.0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_no_feasible_sample_beats_solution(self, seed):
        model, poly, delta = random_problem(seed)
        sol = solve_qk(model, poly, delta)
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-delta, delta, size=(4000, model.n))
        pts = pts[np.linalg.norm(pts, axis=1) <= delta]
        if poly.m:
            pts = pts[np.all(pts @ poly.A.T <= poly.b, axis=1)]
        vals = pts @ model.g + 0.5 * np.einsum("ij,jk,ik->i", pts, model.H, pts)
        if len(vals):
            assert sol.q_value <= vals.min() + 1e-9

    def test_deterministic(self):
        model, poly, delta = random_problem(7, n=3, m=4)
        a, b = solve_qk(model, poly, delta), solve_qk(model, poly, delta)
        np.testing.assert_array_equal(a.s, b.s)
        np.testing.assert_array_equal(a.lambda_lin, b.lambda_lin)


class TestInjectedKKTPoints:
    """Known stationary points built from a chosen active set must be enumerated."""

    @staticmethod
    def build(seed, ball):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 4))
        m = int(rng.integers(1, 4))
        k = int(rng.integers(0, min(m, n - 1) + 1))
        M = rng.normal(size=(n, n))
        H = M + M.T
        A = rng.normal(size=(m, n))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        s = rng.normal(size=n)
        delta = float(np.linalg.norm(s)) * (1.0 if ball else 1.5)
        b = A @ s + np.r_[np.zeros(k), rng.uniform(0.5, 1.0, size=m - k)]
        mu = rng.uniform(0.1, 1.0, size=k)
        lam = float(rng.uniform(0.1, 1.0)) if ball else 0.0
        g = -(H + lam * np.eye(n)) @ s - A[:k].T @ mu
        return QuadraticModel(0.0, g, H), Polyhedron(A, b), delta, s, tuple(range(k))

    @pytest.mark.parametrize("ball", [False, True])
    @pytest.mark.parametrize("seed", range(25))
    def test_recovered(self, seed, ball):
        model, poly, delta, s, active = self.build(seed, ball)
        sol = solve_qk(model, poly, delta, diagnostics=True)
        hits = [c for c in sol.candidates if c.active_set == active and c.ball_active == ball]
        assert any(np.allclose(c.s, s, atol=1e-7) for c in hits)


class TestSolveQkLambda:
    def test_positive_lambda(self, example_model, example_poly):
        sol = solve_qk_lambda(example_model, example_poly, 0.5)
        np.testing.assert_allclose(sol.s, [4.0, 0.0], atol=1e-8)

    def test_negative_lambda(self, example_model, example_poly):
        sol = solve_qk_lambda(example_model, example_poly, -0.5)
        np.testing.assert_allclose(sol.s, [5.0, 3.0], atol=1e-8)

    def test_zero_lambda_tie(self, example_model, example_poly):
        sol = solve_qk_lambda(example_model, example_poly, 0.0)
        np.testing.assert_allclose(sol.s, [4.0, 0.0], atol=1e-8)
        assert sol.q_value == pytest.approx(16.0, abs=1e-9)
        assert len(sol.ties) == 1
        np.testing.assert_allclose(sol.ties[0][0], [5.0, 3.0], atol=1e-8)
        assert abs(sol.ties[0][1] - sol.q_value) <= 1e-9

    def test_multipliers_at_vertex(self, example_model, example_poly):
        # grad of q + 0.25||s||^2 at (4, 0) is (10, 0) = mu2 (0, 1) + mu3 (3, -1)
        sol = solve_qk_lambda(example_model, example_poly, 0.5)
        assert sol.kkt.stationarity <= 1e-8
        np.testing.assert_allclose(sol.lambda_lin, [0.0, 10 / 3, 10 / 3], atol=1e-10)
        assert sol.active_set == (1, 2)

    def test_unbounded_status(self):
        sol = solve_qk_lambda(QuadraticModel(0.0, [0.0, 0.0], -np.eye(2)), Polyhedron.unconstrained(2), 0.5)
        assert sol.status == "unbounded" and not sol.bounded

    def test_linear_on_halfline_unbounded(self):
        poly = Polyhedron(np.array([[1.0]]), np.array([1.0]))
        sol = solve_qk_lambda(QuadraticModel(0.0, [1.0], [[0.0]]), poly, 0.0)
        assert sol.status == "unbounded"

    def test_flat_direction_bounded(self):
        # q = s2 over s2 >= 0: flat along s1, bounded below
        poly = Polyhedron(np.array([[0.0, -1.0]]), np.array([0.0]))
        sol = solve_qk_lambda(QuadraticModel(0.0, [0.0, 1.0], np.zeros((2, 2))), poly, 0.0)
        assert sol.bounded and sol.q_value == pytest.approx(0.0)

    def test_negative_curvature_on_bounded_region(self, example_poly):
        sol = solve_qk_lambda(QuadraticModel(0.0, [0.0, 0.0], -np.eye(2)), example_poly, 0.0)
        assert sol.bounded
        np.testing.assert_allclose(sol.s, [5.0, 3.0])

    def test_recession_cone(self, example_poly):
        assert recession_cone_trivial(example_poly.A)
        assert not recession_cone_trivial(np.array([[1.0, 0.0]]))

    @given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_kkt_when_bounded(self, seed, lam):
        model, poly, _ = random_problem(seed)
        sol = solve_qk_lambda(model, poly, lam)
        if sol.bounded:
            assert sol.kkt.worst() <= TAU_KKT
            assert poly.contains(sol.s)


class TestEqualityTRS:
    def test_one_dimensional(self):
        cands = sorted(solve_equality_trs([[1.0]], [-2.0], 1.0), key=lambda c: c.q_value)
        assert [round(float(c.s[0]), 12) for c in cands] == [1.0, -1.0]
        assert cands[0].lambda_tr == pytest.approx(1.0, abs=1e-12)
        assert cands[1].lambda_tr == pytest.approx(-3.0, abs=1e-12)

    def test_hard_case(self):
        cands = solve_equality_trs(np.diag([-1.0, 1.0]), np.zeros(2), 1.0)
        best = min(c.q_value for c in cands)
        pts = sorted(tuple(np.round(c.s, 12)) for c in cands if c.q_value <= best + 1e-12)
        assert pts == [(-1.0, 0.0), (1.0, 0.0)]
        assert all(c.lambda_tr == pytest.approx(1.0) for c in cands if c.q_value <= best + 1e-12)

    def test_hard_case_with_orthogonal_gradient(self):
        # g orthogonal to the bottom eigenvector and too small to reach the sphere
        cands = solve_equality_trs(np.diag([-1.0, 1.0]), np.array([0.0, 0.5]), 1.0)
        best = min(cands, key=lambda c: c.q_value)
        assert best.lambda_tr == pytest.approx(1.0)
        assert abs(best.s[1] + 0.25) < 1e-12
        assert np.linalg.norm(best.s) == pytest.approx(1.0)

    def test_interior_point_for_definite_hessian(self):
        cands = solve_equality_trs(np.eye(2) * 4.0, np.array([1.0, 0.0]), 1.0)
        inner = [c for c in cands if not c.ball_active]
        assert len(inner) == 1
        np.testing.assert_allclose(inner[0].s, [-0.25, 0.0])

    @pytest.mark.parametrize("seed", range(100))
    def test_sphere_sampling_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        M = rng.normal(size=(3, 3))
        H, g = M + M.T, rng.normal(size=3)
        cands = [c for c in solve_equality_trs(H, g, 1.0) if c.ball_active]
        best = min(c.q_value for c in cands)
        S = sphere_samples(3, 100_000, seed)
        vals = S @ g + 0.5 * np.einsum("ij,jk,ik->i", S, H, S)
        assert best <= vals.min() + 1e-12
        assert vals.min() - best <= 1e-3

    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 3.0))
    @settings(max_examples=60, deadline=None)
    def test_candidates_are_sphere_stationary(self, seed, radius):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        M = rng.normal(size=(n, n))
        H, g = M + M.T, rng.normal(size=n)
        for c in solve_equality_trs(H, g, radius):
            if c.ball_active:
                assert np.linalg.norm(c.s) == pytest.approx(radius, rel=1e-10)
                r = g + (H + c.lambda_tr * np.eye(n)) @ c.s
                assert np.linalg.norm(r) <= 1e-8 * max(1.0, np.linalg.norm(H), np.linalg.norm(g))


class TestKKTResidual:
    def test_hand_built_violation(self):
        sol = SubproblemSolution(np.zeros(1), 1.0, np.zeros(0), (), 0.0, KKTResiduals(0, 0, 0))
        res = kkt_residual(sol, QuadraticModel(0.0, [0.0], [[1.0]]), Polyhedron.unconstrained(1), 1.0)
        assert res.comp_tr == 1.0
        assert res.stationarity == 0.0

    def test_collect_solutions_sees_every_solve(self, example_model, example_poly):
        with collect_solutions() as seen:
            solve_qk(example_model, example_poly, 10.0)
            solve_qk_lambda(example_model, example_poly, 0.5)
        assert len(seen) >= 2
        assert all(s.kkt.worst() <= TAU_KKT for s in seen)
