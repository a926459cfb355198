"""Objective models, feasible polyhedra and problem instances.

Objectives are multivariate polynomials stored as monomial lists, so value,
gradient and Hessian are exact polynomial arithmetic.  The feasible set is a
polyhedron ``{x : A x <= b}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAU_FEAS = 1e-9


class ProblemFormatError(ValueError):
    """Raised when an instance document is malformed.

    ``field`` names the offending entry (dotted path).
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InfeasiblePointError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveModel:
    """Polynomial ``f(x) = sum_t coeff_t * prod_i x_i ** exponents[t, i]``."""

    dimension: int
    coeffs: np.ndarray
    exponents: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        exponents = np.asarray(self.exponents, dtype=np.int64).reshape(len(coeffs), self.dimension)
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if np.any(exponents < 0):
            raise ValueError("exponents must be non-negative")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "exponents", exponents)

    @classmethod
    def from_terms(cls, dimension, terms):
        """Build from ``[(coeff, exponents), ...]``."""
        terms = list(terms)
        coeffs = [float(c) for c, _ in terms]
        exps = [list(e) for _, e in terms]
        if not terms:
            exps = np.zeros((0, dimension), dtype=np.int64)
        return cls(dimension, np.array(coeffs, dtype=float), np.array(exps, dtype=np.int64))

    @classmethod
    def quadratic(cls, H, g=None, c=0.0):
        """Monomial form of ``c + g.x + 0.5 x.H.x``."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        n = H.shape[0]
        g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
        terms = []
        if c != 0.0:
            terms.append((c, [0] * n))
        for i in range(n):
            if g[i] != 0.0:
                e = [0] * n
                e[i] = 1
                terms.append((g[i], e))
        for i in range(n):
            if H[i, i] != 0.0:
                e = [0] * n
                e[i] = 2
                terms.append((0.5 * H[i, i], e))
            for j in range(i + 1, n):
                hij = 0.5 * (H[i, j] + H[j, i])
                if hij != 0.0:
                    e = [0] * n
                    e[i] = 1
                    e[j] = 1
                    terms.append((hij, e))
        return cls.from_terms(n, terms)

    @property
    def degree(self):
        if len(self.coeffs) == 0:
            return 0
        return int(self.exponents.sum(axis=1).max())

    def terms(self):
        return [(float(c), [int(v) for v in e]) for c, e in zip(self.coeffs, self.exponents)]

    def value(self, x):
        x = self._check(x)
        return float(sum(c * _monomial(x, e) for c, e in zip(self.coeffs, self.exponents)))

    def gradient(self, x):
        x = self._check(x)
        n = self.dimension
        g = np.zeros(n)
        for c, e in zip(self.coeffs, self.exponents):
            for j in range(n):
                if e[j] == 0:
                    continue
                d = e.copy()
                d[j] -= 1
                g[j] += c * e[j] * _monomial(x, d)
        return g

    def hessian(self, x):
        x = self._check(x)
        n = self.dimension
        H = np.zeros((n, n))
        for c, e in zip(self.coeffs, self.exponents):
            for i in range(n):
                if e[i] == 0:
                    continue
                for j in range(i, n):
                    d = e.copy()
                    d[i] -= 1
                    factor = e[i]
                    if d[j] == 0:
                        continue
                    factor *= d[j]
                    d[j] -= 1
                    v = c * factor * _monomial(x, d)
                    H[i, j] += v
                    if i != j:
                        H[j, i] += v
        return H

    def difference(self, x, s):
        """``f(x + s) - f(x)`` from the binomial expansion of each monomial.

        Avoids the cancellation of subtracting two nearly equal values, which
        matters once ``||s||**3`` falls below the rounding error of ``f``.
        """
        x = self._check(x)
        s = self._check(s)
        total = 0.0
        for c, e in zip(self.coeffs, self.exponents):
            # prod_i (x_i + s_i)^e_i - prod_i x_i^e_i, expanded over j_i
            factors = []
            for i, ei in enumerate(e):
                ei = int(ei)
                factors.append([math.comb(ei, j) * x[i] ** (ei - j) * s[i] ** j for j in range(ei + 1)])
            # sum over all multi-indices except the all-zero one
            acc = _expand_without_base(factors)
            total += c * acc
        return float(total)

    def _check(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError(f"expected a vector of dimension {self.dimension}, got {x.shape[0]}")
        return x


def _monomial(x, e):
    out = 1.0
    for xi, ei in zip(x, e):
        if ei:
            out *= xi**ei
    return out


def _expand_without_base(factors):
    # factors[i][j] = C(e_i, j) x_i^(e_i-j) s_i^j.  Returns
    # prod_i sum_j factors[i][j] - prod_i factors[i][0].
    with_any = 0.0  # sum over index tuples with at least one j > 0
    base = 1.0  # product of j = 0 terms so far
    for fac in factors:
        rest = sum(fac[1:])
        full = fac[0] + rest
        with_any = with_any * full + base * rest
        base *= fac[0]
    return with_any


def evaluate(model, x):
    """Return ``(f, g, H)`` at ``x``."""
    return model.value(x), model.gradient(x), model.hessian(x)


@dataclass(frozen=True)
class Polyhedron:
    """``{x : A x <= b}`` with ``A`` of shape ``(m, n)``; ``m`` may be zero."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.size == 0 and not (A.ndim == 2 and A.shape[0] == len(b)):
            A = np.zeros((len(b), 0))
        if A.ndim != 2 or A.shape[0] != len(b):
            raise ValueError("A must be an (m, n) matrix matching len(b)")
        if len(b) and np.any(np.all(A == 0.0, axis=1)):
            raise ValueError("constraint rows must not be identically zero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def unconstrained(cls, n):
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = len(lower)
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def slack(self, x):
        """``b - A x``."""
        return self.b - self.A @ np.asarray(x, dtype=float)

    def contains(self, x, tol=TAU_FEAS):
        return bool(self.m == 0 or np.all(self.slack(x) >= -tol))


def shifted_constraints(poly, x, require_feasible=True):
    """Polyhedron ``{s : A s <= b - A x}`` of feasible steps from ``x``.

    Slacks within ``TAU_FEAS`` of zero are clipped to zero so the origin is
    exactly feasible in the result.
    """
    slack = poly.slack(x)
    if require_feasible:
        if poly.m and slack.min() < -TAU_FEAS:
            i = int(np.argmin(slack))
            raise InfeasiblePointError(f"row {i} violated by {-slack[i]:.3e}")
        slack = np.maximum(slack, 0.0)
    return Polyhedron(poly.A.copy(), slack)


def max_feasible_stretch(poly, x, d):
    """Largest ``t >= 0`` with ``A (x + t d) <= b``; ``inf`` if unbounded."""
    d = np.asarray(d, dtype=float)
    if poly.m == 0:
        return math.inf
    rate = poly.A @ d
    slack = np.maximum(poly.slack(x), 0.0)
    moving = rate > 0.0
    if not np.any(moving):
        return math.inf
    return float(np.min(slack[moving] / rate[moving]))


@dataclass(frozen=True)
class Estimates:
    """User-supplied bounds on derivatives along the iterate path."""

    g_max: float
    H_max: float
    g_lip: float
    H_lip: float
    f_min: float

    def __post_init__(self):
        for name in ("g_max", "H_max", "g_lip", "H_lip"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"estimate {name} must be strictly positive, got {v}")

    def to_dict(self):
        return {
            "g_max": self.g_max,
            "H_max": self.H_max,
            "g_lip": self.g_lip,
            "H_lip": self.H_lip,
            "f_min": self.f_min,
        }


@dataclass(frozen=True)
class ProblemInstance:
    objective: ObjectiveModel
    polyhedron: Polyhedron
    estimates: Estimates
    start: np.ndarray
    name: str = field(default="instance", compare=False)

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float).reshape(-1)
        n = self.objective.dimension
        if start.shape[0] != n:
            raise ValueError(f"start has dimension {start.shape[0]}, expected {n}")
        if self.polyhedron.m and self.polyhedron.n != n:
            raise ValueError("constraint matrix width does not match the objective dimension")
        if not self.polyhedron.contains(start):
            raise InfeasiblePointError("start point violates A x <= b")
        object.__setattr__(self, "start", start)

    @property
    def n(self):
        return self.objective.dimension

    def to_dict(self):
        return {
            "name": self.name,
            "dimension": self.n,
            "objective": {"terms": [{"coeff": c, "exponents": e} for c, e in self.objective.terms()]},
            "constraints": {"A": self.polyhedron.A.tolist(), "b": self.polyhedron.b.tolist()},
            "estimates": self.estimates.to_dict(),
            "start": self.start.tolist(),
        }


# ---------------------------------------------------------------------------
# instance files


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFormatError(where, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ProblemFormatError(where, "non-finite value")
    return v


def _require(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ProblemFormatError(f"{where}{key}" if where else key, "missing field")
    return doc[key]


def instance_from_dict(doc):
    """Validate a parsed instance document and build a ``ProblemInstance``."""
    if not isinstance(doc, dict):
        raise ProblemFormatError("<root>", "instance document must be a mapping")
    n = _require(doc, "dimension", "")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ProblemFormatError("dimension", f"expected a positive integer, got {n!r}")

    objective = _require(doc, "objective", "")
    raw_terms = _require(objective, "terms", "objective.")
    if not isinstance(raw_terms, list):
        raise ProblemFormatError("objective.terms", "expected a list")
    terms = []
    for t, term in enumerate(raw_terms):
        where = f"objective.terms[{t}]"
        coeff = _number(_require(term, "coeff", where + "."), where + ".coeff")
        exps = _require(term, "exponents", where + ".")
        if not isinstance(exps, list) or len(exps) != n:
            raise ProblemFormatError(where + ".exponents", f"expected a list of {n} integers")
        for i, e in enumerate(exps):
            if isinstance(e, bool) or not isinstance(e, int) or e < 0:
                raise ProblemFormatError(f"{where}.exponents[{i}]", f"expected a non-negative integer, got {e!r}")
        terms.append((coeff, exps))
    model = ObjectiveModel.from_terms(n, terms)

    cons = doc.get("constraints", {"A": [], "b": []})
    A_raw = _require(cons, "A", "constraints.")
    b_raw = _require(cons, "b", "constraints.")
    if not isinstance(A_raw, list) or not isinstance(b_raw, list):
        raise ProblemFormatError("constraints", "A and b must be lists")
    if len(A_raw) != len(b_raw):
        raise ProblemFormatError("constraints.b", f"has {len(b_raw)} entries but A has {len(A_raw)} rows")
    A = np.zeros((len(A_raw), n))
    for i, row in enumerate(A_raw):
        if not isinstance(row, list) or len(row) != n:
            raise ProblemFormatError(f"constraints.A[{i}]", f"expected a row of {n} numbers")
        for j, v in enumerate(row):
            A[i, j] = _number(v, f"constraints.A[{i}][{j}]")
        if not np.any(A[i]):
            raise ProblemFormatError(f"constraints.A[{i}]", "zero row")
    b = np.array([_number(v, f"constraints.b[{i}]") for i, v in enumerate(b_raw)], dtype=float)
    poly = Polyhedron(A, b)

    est_raw = _require(doc, "estimates", "")
    vals = {}
    for key in ("g_max", "H_max", "g_lip", "H_lip", "f_min"):
        vals[key] = _number(_require(est_raw, key, "estimates."), f"estimates.{key}")
        if key != "f_min" and vals[key] <= 0.0:
            raise ProblemFormatError(f"estimates.{key}", "must be strictly positive")
    estimates = Estimates(**vals)

    start_raw = _require(doc, "start", "")
    if not isinstance(start_raw, list) or len(start_raw) != n:
        raise ProblemFormatError("start", f"expected a list of {n} numbers")
    start = np.array([_number(v, f"start[{i}]") for i, v in enumerate(start_raw)], dtype=float)
    if not poly.contains(start):
        raise ProblemFormatError("start", "start point is infeasible")
    return ProblemInstance(model, poly, estimates, start, name=str(doc.get("name", "instance")))


def load_instance(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProblemFormatError("<document>", f"invalid JSON: {exc}") from exc
    if isinstance(doc, dict) and "name" not in doc:
        doc["name"] = path.stem
    return instance_from_dict(doc)


def dump_instance(instance, path):
    Path(path).write_text(json.dumps(instance.to_dict(), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# derivative bounds for generated instances


def polynomial_bounds(model, lower, upper):
    """Valid upper bounds for ``|f|``, ``||g||``, ``||H||`` and ``||D^3 f||`` on a box.

    Each monomial derivative is bounded by replacing ``x_i`` with
    ``max(|lower_i|, |upper_i|)``; Frobenius norms of the bound arrays bound
    the spectral norms.  Returns a dict keyed like ``Estimates``.
    """
    M = np.maximum(np.abs(np.asarray(lower, dtype=float)), np.abs(np.asarray(upper, dtype=float)))
    n = model.dimension
    f_abs = 0.0
    g_b = np.zeros(n)
    H_b = np.zeros((n, n))
    T_b = np.zeros((n, n, n))
    for c, e in zip(np.abs(model.coeffs), model.exponents):
        f_abs += c * _monomial(M, e)
        for i in range(n):
            if e[i] == 0:
                continue
            d1 = e.copy()
            d1[i] -= 1
            g_b[i] += c * e[i] * _monomial(M, d1)
            for j in range(n):
                if d1[j] == 0:
                    continue
                d2 = d1.copy()
                d2[j] -= 1
                H_b[i, j] += c * e[i] * d1[j] * _monomial(M, d2)
                for k in range(n):
                    if d2[k] == 0:
                        continue
                    d3 = d2.copy()
                    d3[k] -= 1
                    T_b[i, j, k] += c * e[i] * d1[j] * d2[k] * _monomial(M, d3)
    return {
        "f_abs": float(f_abs),
        "g_max": float(np.linalg.norm(g_b)),
        "H_max": float(np.linalg.norm(H_b)),
        "H_lip": float(np.sqrt(np.sum(T_b**2))),
    }
