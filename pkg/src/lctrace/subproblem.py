"""Exact global solver for the polyhedral trust-region subproblem.

Two problems are solved over the shifted polyhedron ``{s : A s <= b}``:

* ``solve_qk``: minimize ``q(s) = f0 + g.s + 0.5 s.H.s`` subject to
  ``||s|| <= delta``;
* ``solve_qk_lambda``: minimize ``q(s) + 0.5 lam ||s||**2`` with no ball.

Both enumerate every face of the polyhedron (each subset of linearly
independent rows held at equality) and, on each face, every stationary point
of the reduced quadratic: the interior stationary point and, when a ball is
present, all stationary points on the sphere.  The global minimizer is the
best feasible candidate.  The cost is exponential in ``m`` and intended for
small constraint counts.
"""

from __future__ import annotations

import contextlib
import functools
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import nnls

from .problem import TAU_FEAS, Polyhedron

log = logging.getLogger(__name__)

TAU_KKT = 1e-8
TAU_TIE = 1e-9
FACE_CAP = 12
MAX_BISECTIONS = 200


class SubproblemError(RuntimeError):
    pass


class FaceBudgetExceeded(SubproblemError):
    pass


class RootFindingError(SubproblemError):
    pass


@dataclass(frozen=True)
class QuadraticModel:
    """``q(s) = f0 + g.s + 0.5 s.H.s``."""

    f0: float
    g: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(-1)
        H = np.asarray(self.H, dtype=float).reshape(len(g), len(g))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f0", float(self.f0))

    @property
    def n(self):
        return len(self.g)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        return self.f0 + float(self.g @ s) + 0.5 * float(s @ self.H @ s)

    def regularized(self, lam):
        return QuadraticModel(self.f0, self.g, self.H + lam * np.eye(self.n))


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    comp_lin: float
    comp_tr: float

    def worst(self):
        return max(self.stationarity, self.comp_lin, self.comp_tr)

    def to_dict(self):
        return {"stationarity": self.stationarity, "comp_lin": self.comp_lin, "comp_tr": self.comp_tr}


@dataclass
class FaceCandidate:
    """A stationary point of ``q`` restricted to one face (and possibly the sphere)."""

    active_set: tuple
    ball_active: bool
    s: np.ndarray
    q_value: float
    lambda_tr: float = 0.0
    lambda_lin: np.ndarray | None = None


@dataclass
class SubproblemSolution:
    s: np.ndarray
    lambda_tr: float
    lambda_lin: np.ndarray
    active_set: tuple
    q_value: float
    kkt: KKTResiduals
    status: str = "optimal"
    delta: float | None = None
    ties: list = field(default_factory=list)
    candidates: list | None = None

    @property
    def norm(self):
        return float(np.linalg.norm(self.s))

    @property
    def tie_fired(self):
        return bool(self.ties)

    @property
    def bounded(self):
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# solution observers (used by the acceptance suite to audit every solve)

_observers = []


@contextlib.contextmanager
def collect_solutions():
    """Record every ``SubproblemSolution`` produced inside the block."""
    bucket = []
    _observers.append(bucket)
    try:
        yield bucket
    finally:
        _observers.remove(bucket)


def _emit(solution):
    for bucket in _observers:
        bucket.append(solution)


# ---------------------------------------------------------------------------
# faces


@functools.lru_cache(maxsize=512)
def _faces_cached(key, m, n):
    A = np.frombuffer(key, dtype=float).reshape(m, n)
    norms = np.linalg.norm(A, axis=1)
    faces = [((), np.zeros((n, 0)), np.eye(n))]
    for k in range(1, min(m, n) + 1):
        for I in combinations(range(m), k):
            rows = A[list(I)]
            # independence test on unit rows; dependent subsets duplicate a smaller face
            sv = np.linalg.svd(rows / norms[list(I), None], compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0]:
                continue
            U, S, Vt = np.linalg.svd(rows, full_matrices=True)
            P = Vt[:k].T @ np.diag(1.0 / S) @ U.T
            Z = Vt[k:].T
            faces.append((I, P, Z))
    return tuple(faces)


def _faces(A):
    m, n = A.shape
    if m > FACE_CAP:
        raise FaceBudgetExceeded(f"{m} linear constraints exceed the face enumeration cap of {FACE_CAP}")
    return _faces_cached(np.ascontiguousarray(A, dtype=float).tobytes(), m, n)


# ---------------------------------------------------------------------------
# equality-constrained trust-region kernel


def _bisect(fun, lo, hi, increasing):
    """Root of a monotone function on ``(lo, hi)``; endpoints are never evaluated."""
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        v = fun(mid)
        if v == 0.0:
            return mid
        if (v > 0.0) == increasing:
            hi = mid
        else:
            lo = mid
    if hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi)):
        raise RootFindingError(f"bisection did not converge on [{lo!r}, {hi!r}]")
    return 0.5 * (lo + hi)


def _group_eigenvalues(w, tol):
    groups = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol:
            groups.append(list(range(start, i)))
            start = i
    return groups


def _sphere_points(w, c, radius, scale):
    """All ``(z, mu)`` with ``(diag(w) + mu) z = -c`` and ``||z|| = radius``.

    ``w`` ascending eigenvalues, ``c`` the gradient in eigen-coordinates.
    """
    d = len(w)
    tol_w = 1e-12 * scale
    tol_c = 1e-12 * scale
    groups = _group_eigenvalues(w, tol_w)
    gw = [float(np.mean(w[G])) for G in groups]
    gc2 = [float(np.sum(c[G] ** 2)) for G in groups]
    active = [i for i, G in enumerate(groups) if math.sqrt(gc2[i]) > tol_c]
    r2 = radius * radius
    cnorm = math.sqrt(sum(gc2[i] for i in active))

    def phi(mu):
        return sum(gc2[i] / (gw[i] + mu) ** 2 for i in active) - r2

    def dphi(mu):
        return -2.0 * sum(gc2[i] / (gw[i] + mu) ** 3 for i in active)

    def point(mu):
        z = np.zeros(d)
        for i, G in enumerate(groups):
            den = gw[i] + mu
            if abs(den) > tol_w or i in active:
                z[G] = -c[G] / den
        nz = np.linalg.norm(z)
        if nz > 0.0:
            z *= radius / nz
        return z

    roots = []
    if active:
        # poles in ascending order of mu = -w
        poles = sorted(-gw[i] for i in active)
        roots.append(_bisect(phi, poles[-1], poles[-1] + cnorm / radius, increasing=False))
        roots.append(_bisect(phi, poles[0] - cnorm / radius, poles[0], increasing=True))
        for lo, hi in zip(poles[:-1], poles[1:]):
            mu_min = _bisect(dphi, lo, hi, increasing=True)
            v = phi(mu_min)
            if v < 0.0:
                roots.append(_bisect(phi, lo, mu_min, increasing=False))
                roots.append(_bisect(phi, mu_min, hi, increasing=True))
            elif v <= 1e-14 * r2:
                roots.append(mu_min)
    out = [(point(mu), mu) for mu in roots]

    # hard case: eigen-groups orthogonal to the gradient admit mu = -w_G
    for gi, G in enumerate(groups):
        if gi in active:
            continue
        mu = -gw[gi]
        z = np.zeros(d)
        for i, H in enumerate(groups):
            if i in active:
                z[H] = -c[H] / (gw[i] + mu)
        rem = r2 - float(z @ z)
        if rem < -1e-12 * r2:
            continue
        t = math.sqrt(max(rem, 0.0))
        for j in G:
            for sign in (1.0, -1.0):
                zz = z.copy()
                zz[j] = sign * t
                out.append((zz, mu))
                if t == 0.0:
                    break
    return out


def solve_equality_trs(H_red, g_red, radius):
    """Stationary points of ``g.y + 0.5 y.H.y`` on the sphere ``||y|| = radius``.

    Returns ``FaceCandidate`` objects (empty active set).  Boundary points carry
    ``ball_active=True`` and their multiplier in ``lambda_tr``; the interior
    Newton point is appended with ``ball_active=False`` when ``H_red`` is
    positive definite and the point lies strictly inside the ball.
    """
    H_red = np.atleast_2d(np.asarray(H_red, dtype=float))
    g_red = np.asarray(g_red, dtype=float).reshape(-1)
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    H_red = 0.5 * (H_red + H_red.T)
    w, Q = np.linalg.eigh(H_red)
    c = Q.T @ g_red
    scale = max(1.0, float(np.max(np.abs(w))), float(np.linalg.norm(g_red)))
    model = QuadraticModel(0.0, g_red, H_red)
    cands = []
    for z, mu in _sphere_points(w, c, radius, scale):
        y = Q @ z
        cands.append(FaceCandidate((), True, y, model.value(y), lambda_tr=float(mu)))
    if w[0] > 1e-12 * scale:
        y = -Q @ (c / w)
        if np.linalg.norm(y) < radius:
            cands.append(FaceCandidate((), False, y, model.value(y)))
    return cands


# ---------------------------------------------------------------------------
# enumeration


def _interior_point(w, c, scale):
    tol_w = 1e-12 * scale
    small = np.abs(w) <= tol_w
    if np.any(np.abs(c[small]) > 1e-12 * scale):
        return None
    z = np.zeros_like(c)
    z[~small] = -c[~small] / w[~small]
    return z


def _enumerate(model, A, b, delta):
    """Yield ``FaceCandidate`` stationary points (unfiltered)."""
    g, H = model.g, model.H
    n = model.n
    scale = max(1.0, float(np.linalg.norm(H, 2)) if n else 1.0, float(np.linalg.norm(g)))
    for I, P, Z in _faces(A):
        s0 = P @ b[list(I)] if I else np.zeros(n)
        n0sq = float(s0 @ s0)
        if delta is not None and n0sq > delta * delta * (1.0 + 1e-12) + TAU_FEAS:
            continue
        if Z.shape[1] == 0:
            yield FaceCandidate(I, False, s0, model.value(s0))
            continue
        Hr = Z.T @ H @ Z
        gr = Z.T @ (g + H @ s0)
        w, Q = np.linalg.eigh(0.5 * (Hr + Hr.T))
        c = Q.T @ gr
        z = _interior_point(w, c, scale)
        if z is not None:
            s = s0 + Z @ (Q @ z)
            yield FaceCandidate(I, False, s, model.value(s))
        if delta is None:
            continue
        r2 = delta * delta - n0sq
        if r2 <= 0.0:
            continue
        for z, mu in _sphere_points(w, c, math.sqrt(r2), scale):
            s = s0 + Z @ (Q @ z)
            # pin the point to the sphere; s0 is orthogonal to range(Z)
            yield FaceCandidate(I, True, s, model.value(s), lambda_tr=float(mu))


def _lex_less(a, b, tol):
    for ai, bi in zip(a, b):
        if ai < bi - tol:
            return True
        if ai > bi + tol:
            return False
    return False


def _select(cands):
    qmin = min(c.q_value for c in cands)
    tied = [c for c in cands if c.q_value <= qmin + TAU_TIE]
    norms = [float(np.linalg.norm(c.s)) for c in tied]
    nmin = min(norms)
    short = [c for c, nv in zip(tied, norms) if nv <= nmin + TAU_TIE * max(1.0, nmin)]
    best = short[0]
    for c in short[1:]:
        if _lex_less(c.s, best.s, TAU_TIE):
            best = c
    ties = []
    for c in tied:
        if np.linalg.norm(c.s - best.s) > 1e-7 * max(1.0, nmin):
            if all(np.linalg.norm(c.s - t[0]) > 1e-7 * max(1.0, nmin) for t in ties):
                ties.append((c.s.copy(), c.q_value))
    return best, ties


def _recover_multipliers(model, A, b, s, delta, lam_reg=0.0):
    """Non-negative multipliers for the constraints active at ``s``.

    Least squares on the stationarity equation restricted to active rows (and
    the ball when it is active), with a non-negativity bound.
    """
    m = A.shape[0]
    slack = b - A @ s if m else np.zeros(0)
    act_tol = TAU_FEAS * max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    active = [i for i in range(m) if slack[i] <= act_tol]
    ball = delta is not None and np.linalg.norm(s) >= delta - TAU_FEAS * max(1.0, delta)
    cols = []
    if ball:
        cols.append(s)
    cols.extend(A[i] for i in active)
    grad = model.g + model.H @ s + lam_reg * s
    lam_tr = 0.0
    lam_lin = np.zeros(m)
    if cols:
        M = np.column_stack(cols)
        sol, _ = nnls(M, -grad)
        if ball:
            lam_tr, sol = float(sol[0]), sol[1:]
        lam_lin[active] = sol
    return lam_tr, lam_lin, tuple(active)


def kkt_residual(solution, model, shifted_poly, delta):
    """Fresh CC1-CC3 style residuals of ``solution`` for ``model`` on ``shifted_poly``.

    With ``delta=None`` the ball term is absent and ``solution.lambda_tr`` is
    read as the regularization weight of ``Q(lambda)``.
    """
    s = np.asarray(solution.s, dtype=float)
    A, b = shifted_poly.A, shifted_poly.b
    lam_lin = np.asarray(solution.lambda_lin, dtype=float)
    r = model.g + (model.H + solution.lambda_tr * np.eye(model.n)) @ s
    if A.shape[0]:
        r = r + A.T @ lam_lin
        comp_lin = float(np.max(np.abs(lam_lin * (b - A @ s))))
    else:
        comp_lin = 0.0
    comp_tr = 0.0 if delta is None else abs(solution.lambda_tr * (delta * delta - float(s @ s)))
    return KKTResiduals(float(np.linalg.norm(r)), comp_lin, comp_tr)


def _feasible(c, A, b, delta):
    if A.shape[0] and np.any(A @ c.s > b + TAU_FEAS):
        return False
    if delta is not None and np.linalg.norm(c.s) > delta + TAU_FEAS:
        return False
    return True


def _solve(model, poly, delta, diagnostics):
    A, b = poly.A, poly.b
    raw = list(_enumerate(model, A, b, delta))
    cands = [c for c in raw if _feasible(c, A, b, delta)]
    if log.isEnabledFor(logging.DEBUG):
        for c in raw:
            log.debug("face %s ball=%s q=%.12g s=%s", c.active_set, c.ball_active, c.q_value, c.s)
    return raw, cands


def solve_qk(model, shifted_poly, delta, diagnostics=False):
    """Global minimizer of ``model`` over ``{A s <= b, ||s|| <= delta}``.

    Ties in value (within ``TAU_TIE``) go to the smallest norm, then the
    lexicographically smallest point; the other tied points are listed in
    ``solution.ties``.
    """
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    raw, cands = _solve(model, shifted_poly, delta, diagnostics)
    if not cands:
        raise SubproblemError("no feasible stationary point; is the shifted polyhedron empty?")
    best, ties = _select(cands)
    lam_tr, lam_lin, active = _recover_multipliers(model, shifted_poly.A, shifted_poly.b, best.s, delta)
    sol = SubproblemSolution(
        s=best.s.copy(),
        lambda_tr=lam_tr,
        lambda_lin=lam_lin,
        active_set=active,
        q_value=model.value(best.s),
        kkt=KKTResiduals(0.0, 0.0, 0.0),
        delta=float(delta),
        ties=ties,
        candidates=raw if diagnostics else None,
    )
    sol.kkt = kkt_residual(sol, model, shifted_poly, delta)
    if ties:
        log.debug("tie-break fired among %d minimizers", len(ties) + 1)
    _emit(sol)
    return sol


def _is_unbounded(reg, poly, cands, best):
    w_min = float(np.linalg.eigvalsh(reg.H)[0]) if reg.n else 0.0
    scale = max(1.0, float(np.linalg.norm(reg.H, 2)), float(np.linalg.norm(reg.g)))
    if w_min > 1e-12 * scale:
        return False
    if poly.m and recession_cone_trivial(poly.A):
        return False
    # negative curvature along a recession direction
    rec = Polyhedron(poly.A, np.zeros(poly.m))
    curv = solve_qk(QuadraticModel(0.0, np.zeros(reg.n), reg.H), rec, 1.0)
    if curv.q_value < -1e-10 * scale:
        return True
    if best is None:
        return True
    # zero-curvature recession directions: bounded problems have v(R) = q* for
    # any R beyond the largest stationary point
    radius = 1e3 * (1.0 + max(float(np.linalg.norm(c.s)) for c in cands))
    far = solve_qk(reg, poly, radius)
    return far.q_value < best.q_value - 1e-8 * (1.0 + abs(best.q_value))


@functools.lru_cache(maxsize=256)
def _recession_trivial_cached(key, m, n):
    A = np.frombuffer(key, dtype=float).reshape(m, n)
    # max ||d||^2 over the recession cone inside the unit ball is 1 iff the cone is nontrivial
    probe = solve_qk(QuadraticModel(0.0, np.zeros(n), -2.0 * np.eye(n)), Polyhedron(A, np.zeros(m)), 1.0)
    return probe.q_value > -0.5


def recession_cone_trivial(A):
    """True when ``{d : A d <= 0} = {0}``, i.e. the polyhedron is bounded."""
    A = np.ascontiguousarray(A, dtype=float)
    m, n = A.shape
    if m == 0:
        return False
    return _recession_trivial_cached(A.tobytes(), m, n)


def solve_qk_lambda(model, shifted_poly, lam, diagnostics=False):
    """Global minimizer of ``q(s) + 0.5 lam ||s||^2`` over ``{A s <= b}``.

    Returns a solution with ``status="unbounded"`` (and ``s`` set to the best
    stationary point found, if any) when the regularized problem is unbounded
    below.  ``solution.lambda_tr`` holds ``lam``.
    """
    reg = model.regularized(lam)
    raw, cands = _solve(reg, shifted_poly, None, diagnostics)
    best, ties = _select(cands) if cands else (None, [])
    if _is_unbounded(reg, shifted_poly, cands, best):
        s = best.s.copy() if best is not None else np.zeros(model.n)
        sol = SubproblemSolution(
            s=s,
            lambda_tr=float(lam),
            lambda_lin=np.zeros(shifted_poly.m),
            active_set=(),
            q_value=-math.inf,
            kkt=KKTResiduals(math.nan, math.nan, math.nan),
            status="unbounded",
            candidates=raw if diagnostics else None,
        )
        return sol
    _, lam_lin, active = _recover_multipliers(reg, shifted_poly.A, shifted_poly.b, best.s, None)
    sol = SubproblemSolution(
        s=best.s.copy(),
        lambda_tr=float(lam),
        lambda_lin=lam_lin,
        active_set=active,
        q_value=reg.value(best.s),
        kkt=KKTResiduals(0.0, 0.0, 0.0),
        delta=None,
        ties=ties,
        candidates=raw if diagnostics else None,
    )
    sol.kkt = kkt_residual(sol, model, shifted_poly, None)
    _emit(sol)
    return sol
