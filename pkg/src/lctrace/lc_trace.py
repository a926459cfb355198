"""First-order trust-region method with adaptive contraction over a polyhedron.

The state machine classifies each trial step as an accepted step (at the
``Delta`` cap or under the ratio test), a contraction or an expansion, and
updates ``(x, delta, Delta, sigma)`` accordingly.  Contractions go through
``contract``, which picks a larger regularization weight so that the trust
radius strictly shrinks.

Every iteration produces a plain-dict trace record; see ``checker`` for the
invariants replayed over recorded traces.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .problem import TAU_FEAS, evaluate, shifted_constraints
from .stationarity import chi_from_derivatives
from .subproblem import (
    TAU_KKT,
    TAU_TIE,
    QuadraticModel,
    SubproblemError,
    SubproblemSolution,
    kkt_residual,
    solve_qk,
    solve_qk_lambda,
)

log = logging.getLogger(__name__)

ACCEPT_DELTA = "AcceptDelta"
ACCEPT_SIGMA = "AcceptSigma"
CONTRACT = "Contract"
EXPAND = "Expand"
ACCEPT = (ACCEPT_DELTA, ACCEPT_SIGMA)

STATIONARY = "stationary"
ITERATION_CAP = "iteration_cap"


class SolverFailure(RuntimeError):
    """Raised when a run cannot continue; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ContractError(SolverFailure):
    pass


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 0.1
    gamma_C: float = 0.5
    gamma_E: float = 2.0
    gamma_lambda: float = 2.0
    epsilon: float = 1e-4
    delta0: float = 0.5
    Delta0: float = 1.0
    sigma0_user: float = 1.0
    max_iterations: int = 1000
    Delta_hat: float | None = None
    kappa: float = 1.0 / 6.0
    contract_cap: int | None = None
    verify_cache: bool = False
    tau_eq: float = 1e-9
    tau_feas: float = TAU_FEAS
    tau_kkt: float = TAU_KKT
    tau_tie: float = TAU_TIE

    def __post_init__(self):
        checks = [
            (0.0 < self.rho < 1.0, "rho must lie in (0, 1)"),
            (0.0 < self.gamma_C < 1.0, "gamma_C must lie in (0, 1)"),
            (self.gamma_E > 1.0, "gamma_E must exceed 1"),
            (self.gamma_lambda > 1.0, "gamma_lambda must exceed 1"),
            (self.epsilon > 0.0, "epsilon must be positive"),
            (0.0 < self.delta0 <= self.Delta0, "need 0 < delta0 <= Delta0"),
            (self.sigma0_user > 0.0, "sigma0_user must be positive"),
            (self.max_iterations >= 0, "max_iterations must be non-negative"),
            (0.0 < self.kappa <= 1.0, "kappa must lie in (0, 1]"),
            (self.Delta_hat is None or self.Delta_hat >= self.Delta0, "Delta_hat must be at least Delta0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


# ---------------------------------------------------------------------------
# constants ledger


@dataclass(frozen=True)
class ConstantsLedger:
    sigma_lower: float
    sigma_upper: float
    c_min: float
    lambda_max: float
    g_max_bound: float
    delta_cap_estimate: float
    h_tilde: float
    l_tilde: float
    kappa: float
    sigma_max_bound: float
    lambda0: float
    sigma0: float
    epsilon: float
    fixed_point_residual: float
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def lambda_bound(self):
        return max(self.lambda0, self.lambda_max)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def sigma_lower_from(epsilon, c_min, lambda_max, lambda0):
    den = c_min + max(lambda_max, lambda0)
    if not den > 0.0:
        raise ValueError("non-positive denominator in the sigma lower bound")
    return epsilon / den


def lambda_max_bound(est, rho, gamma_lambda, Delta_hat, sigma_lower):
    a = est.g_lip + 2.0 * est.H_max + (rho + sigma_lower) * Delta_hat + math.sqrt(sigma_lower * est.g_max)
    b = gamma_lambda * (est.g_lip + est.H_max + rho * Delta_hat)
    return max(a, b)


def _c_min(est, lam, lambda0, Delta_hat):
    G = (est.H_max + max(lambda0, lam)) * Delta_hat
    return est.H_max + G + est.g_max, G


def finalize_ledger(config, estimates, lambda0, epsilon=None):
    """Resolve the analysis constants once ``lambda0`` is known.

    ``sigma_lower`` and ``lambda_max`` are defined in terms of each other; a
    single substitution pass is used and the relative change of
    ``lambda_max`` under the final ``sigma_lower`` is kept as
    ``fixed_point_residual``.
    """
    eps = config.epsilon if epsilon is None else epsilon
    est = estimates
    lambda0 = float(lambda0)
    Dh = config.Delta_hat if config.Delta_hat is not None else 10.0 * config.Delta0
    sigma_upper = 2.0 * Dh

    lam0 = lambda_max_bound(est, config.rho, config.gamma_lambda, Dh, 0.0)
    c_prov, _ = _c_min(est, lam0, lambda0, Dh)
    sl_prov = eps / (c_prov + lambda0)
    lam = lambda_max_bound(est, config.rho, config.gamma_lambda, Dh, sl_prov)
    c_min, G = _c_min(est, lam, lambda0, Dh)
    sl = sigma_lower_from(eps, c_min, lam, lambda0)
    lam_final = lambda_max_bound(est, config.rho, config.gamma_lambda, Dh, sl)
    residual = abs(lam_final - lam) / lam

    sigma0 = max(config.sigma0_user, sl)
    sigma_max = max(
        sigma0,
        sigma_upper,
        (config.gamma_lambda / config.gamma_C) * (est.H_lip + 2.0 * config.rho) / (2.0 * config.kappa),
    )
    provenance = {
        "delta_cap_estimate": "user" if config.Delta_hat is not None else "10*Delta0",
        "sigma_lower": "one-pass substitution from a provisional value eps/(C_min + lambda0)",
        "lambda_max": "re-evaluated with the final sigma_lower",
        "kappa": "configured; analysis only",
        "h_tilde": "max(H_lip, H_max) from estimates",
        "l_tilde": "max(g_lip, g_max) from estimates",
    }
    return ConstantsLedger(
        sigma_lower=sl,
        sigma_upper=sigma_upper,
        c_min=c_min,
        lambda_max=lam_final,
        g_max_bound=G,
        delta_cap_estimate=Dh,
        h_tilde=max(est.H_lip, est.H_max),
        l_tilde=max(est.g_lip, est.g_max),
        kappa=config.kappa,
        sigma_max_bound=sigma_max,
        lambda0=lambda0,
        sigma0=sigma0,
        epsilon=eps,
        fixed_point_residual=residual,
        provenance=provenance,
    )


def contract_solve_cap(ledger, config, estimates):
    if config.contract_cap is not None:
        return config.contract_cap
    arg = (
        (ledger.c_min + ledger.lambda_bound)
        * (estimates.H_max + estimates.g_lip + config.rho * ledger.delta_cap_estimate)
        / (ledger.sigma_lower * ledger.epsilon)
    )
    return max(16, 4 * math.ceil(max(math.log(arg), 1.0)))


# ---------------------------------------------------------------------------
# update rules


def classify_step(rho_k, lambda_tr, s_norm, sigma_k, Delta_k, rho_bar, tol=1e-9):
    if s_norm <= 0.0:
        raise ValueError("classification needs a nonzero step")
    if rho_k < rho_bar:
        return CONTRACT
    if abs(s_norm - Delta_k) <= tol * Delta_k:
        return ACCEPT_DELTA
    if lambda_tr / s_norm <= sigma_k:
        return ACCEPT_SIGMA
    return EXPAND


def accept_update(x, s, lambda_tr, delta, Delta, sigma, gamma_E):
    """Returns ``(x_next, Delta_next, delta_next, sigma_next)``."""
    ns = float(np.linalg.norm(s))
    Delta_next = max(Delta, gamma_E * ns)
    delta_next = min(Delta_next, max(delta, gamma_E * ns))
    sigma_next = max(sigma, lambda_tr / ns)
    return np.asarray(x) + np.asarray(s), Delta_next, delta_next, sigma_next


def expand_update(lambda_tr, sigma, Delta):
    """Returns ``(delta_next, sigma_next)``."""
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    return min(Delta, lambda_tr / sigma), sigma


@dataclass
class ContractOutcome:
    delta_next: float
    cached: SubproblemSolution | None
    branch: str
    steps: list
    lambdas: list
    solves: int
    unbounded_retries: int

    def to_record(self):
        return {
            "branch": self.branch,
            "steps": list(self.steps),
            "lambdas": list(self.lambdas),
            "solves": self.solves,
            "unbounded_retries": self.unbounded_retries,
            "cached": self.cached is not None,
        }


def contract(model, shifted, s_k, lambda_k, chi_k, Delta_k, ledger, config, H_max, cap=None):
    """Radius contraction after a rejected step.

    Returns a ``ContractOutcome`` whose ``delta_next`` is strictly below
    ``||s_k||``.  When ``delta_next`` equals the norm of a regularized
    solution, that solution is returned in ``cached`` for reuse as the next
    trial step.
    """
    tau = config.tau_eq
    gl = config.gamma_lambda
    nk = float(np.linalg.norm(s_k))
    shrunk = nk * (1.0 - tau)
    cap = cap if cap is not None else 64
    lambdas = []
    steps = []
    counters = {"solves": 0, "retries": 0}

    def solve(lam):
        while True:
            if counters["solves"] >= cap:
                raise ContractError(
                    f"contraction exceeded {cap} subproblem solves (last lambda {lam:.6g}, ||s_k|| {nk:.6g})"
                )
            sol = solve_qk_lambda(model, shifted, lam)
            counters["solves"] += 1
            lambdas.append(float(lam))
            if sol.bounded:
                return sol, lam
            counters["retries"] += 1
            log.debug("regularized subproblem unbounded at lambda=%g; escalating", lam)
            lam = gl * lam if lam > 0.0 else ledger.sigma_lower * Delta_k

    def done(delta_next, cached, branch):
        return ContractOutcome(delta_next, cached, branch, steps, lambdas, counters["solves"], counters["retries"])

    lam_bar = lambda_k + ledger.sigma_lower * Delta_k
    s_bar, lam_bar = solve(lam_bar)
    steps.append(2)
    nbar = s_bar.norm
    if nbar < shrunk and lambda_k < ledger.sigma_lower * nk:
        steps.append(4)
        lam = lam_bar + H_max + math.sqrt(ledger.sigma_lower * max(chi_k, 0.0))
        sol, lam = solve(lam)
        ns = sol.norm
        if 0.0 < ns < shrunk and lam / ns <= ledger.sigma_upper:
            steps.append(5)
            return done(ns, sol, "A5")
        steps.append(8)
        if nbar > 0.0:
            return done(nbar, s_bar, "A8")
        steps.append(24)
        return done(config.gamma_C * nk, None, "A24")

    if abs(nbar - nk) <= tau * max(nk, 1e-300):
        steps.append(12)
        lam = gl * lam_bar
    else:
        steps.append(14)
        # geometric escalation from zero never moves
        lam = gl * (lambda_k if lambda_k > 0.0 else lam_bar)
    sol, lam = solve(lam)
    # strict shrink keeps the radius decreasing even when ||s(lambda)|| is not monotone
    while sol.norm >= shrunk:
        steps.append(17)
        sol, lam = solve(gl * lam)
    if sol.norm >= config.gamma_C * nk:
        steps.append(21)
        return done(sol.norm, sol, "B21")
    steps.append(24)
    return done(config.gamma_C * nk, None, "B24")


# ---------------------------------------------------------------------------
# stepper


def _vec(a):
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _mat(a):
    return [[float(v) for v in row] for row in np.atleast_2d(np.asarray(a, dtype=float))]


class FirstOrderStepper:
    """Iteration engine; one call to ``step`` is one iteration.

    The trial step for the current point is always available as ``self.sol``
    together with its acceptance ratio ``self.rho``.
    """

    def __init__(self, instance, config, epsilon=None):
        self.instance = instance
        self.config = config
        self.objective = instance.objective
        self.poly = instance.polyhedron
        self.k = 0
        self.x = instance.start.copy()
        self.delta = config.delta0
        self.Delta = config.Delta0
        self._point = None
        self._load_point()
        self.sol = self._solve_trust(self.delta)
        self.sol_solves = 1
        self.sol_cached = False
        self.ledger = finalize_ledger(config, instance.estimates, self.sol.lambda_tr, epsilon)
        self.sigma = self.ledger.sigma0
        self.cap = contract_solve_cap(self.ledger, config, instance.estimates)

    # -- point data
    def _load_point(self):
        f, g, H = evaluate(self.objective, self.x)
        shifted = shifted_constraints(self.poly, self.x)
        self._point = {"f": f, "g": g, "H": H, "shifted": shifted, "chi": None, "chi_witness": None}
        self.model = QuadraticModel(f, g, H)

    @property
    def f(self):
        return self._point["f"]

    @property
    def g(self):
        return self._point["g"]

    @property
    def H(self):
        return self._point["H"]

    @property
    def shifted(self):
        return self._point["shifted"]

    def chi(self):
        if self._point["chi"] is None:
            c, w = chi_from_derivatives(self.g, self.shifted)
            self._point["chi"], self._point["chi_witness"] = c, w
        return self._point["chi"]

    def _solve_trust(self, delta):
        sol = solve_qk(self.model, self.shifted, delta)
        self.rho = self._rho(sol.s)
        return sol

    def _rho(self, s):
        ns = float(np.linalg.norm(s))
        if ns == 0.0:
            return -math.inf
        return -self.objective.difference(self.x, s) / ns**3

    def _adopt(self, cached):
        """Reuse a regularized solution as the trust-region solution at radius ``||s||``."""
        delta = cached.norm
        sol = SubproblemSolution(
            s=cached.s,
            lambda_tr=cached.lambda_tr,
            lambda_lin=cached.lambda_lin,
            active_set=cached.active_set,
            q_value=self.model.value(cached.s),
            kkt=cached.kkt,
            delta=delta,
            ties=cached.ties,
        )
        sol.kkt = kkt_residual(sol, self.model, self.shifted, delta)
        if self.config.verify_cache:
            fresh = solve_qk(self.model, self.shifted, delta)
            if abs(fresh.q_value - sol.q_value) > self.config.tau_eq * (1.0 + abs(sol.q_value)):
                log.warning("cached step disagrees with a fresh solve at k=%d: %g vs %g", self.k, sol.q_value, fresh.q_value)
        self.rho = self._rho(sol.s)
        return sol

    def reset_point(self, x):
        """Move to ``x`` without a first-order iteration and re-solve the trust step."""
        self.x = np.asarray(x, dtype=float).copy()
        self._load_point()
        self.sol = self._solve_trust(self.delta)
        self.sol_solves = 1
        self.sol_cached = False

    def _base_record(self):
        sol = self.sol
        ns = sol.norm
        sHs = float(sol.s @ self.H @ sol.s)
        gs = float(self.g @ sol.s)
        model_decrease = -(gs + 0.5 * sHs)
        lam = sol.lambda_tr
        return {
            "type": "iteration",
            "k": self.k,
            "x": _vec(self.x),
            "f": float(self.f),
            "g": _vec(self.g),
            "H": _mat(self.H),
            "delta": float(self.delta),
            "Delta": float(self.Delta),
            "sigma": float(self.sigma),
            "s": _vec(sol.s),
            "s_norm": ns,
            "lambda": float(lam),
            "lambda_lin": _vec(sol.lambda_lin),
            "active_set": [int(i) for i in sol.active_set],
            "rho": float(self.rho),
            "chi": float(self.chi()),
            "kkt": sol.kkt.to_dict(),
            "tie": sol.tie_fired,
            "n_ties": len(sol.ties),
            "cached": self.sol_cached,
            "model_decrease": model_decrease,
            "assumption3_case": bool(gs >= 0.0 and sHs <= 0.0),
            "kappa_empirical": model_decrease / (lam * ns * ns) if lam > 0.0 and ns > 0.0 else None,
        }

    def step(self):
        """Run one iteration and return its trace record."""
        t0 = time.perf_counter()
        cfg = self.config
        sol = self.sol
        rec = self._base_record()
        rec["step_kind"] = "first_order"
        ns = sol.norm
        lam = sol.lambda_tr
        cls = classify_step(self.rho, lam, ns, self.sigma, self.Delta, cfg.rho, cfg.tau_eq)
        rec["step_class"] = cls
        solves = self.sol_solves
        contract_rec = None
        if cls in ACCEPT:
            self.x, self.Delta, self.delta, self.sigma = accept_update(
                self.x, sol.s, lam, self.delta, self.Delta, self.sigma, cfg.gamma_E
            )
            self._load_point()
            self.sol = self._solve_trust(self.delta)
            self.sol_solves, self.sol_cached = 1, False
        elif cls == EXPAND:
            self.delta, self.sigma = expand_update(lam, self.sigma, self.Delta)
            self.sol = self._solve_trust(self.delta)
            self.sol_solves, self.sol_cached = 1, False
        else:
            out = contract(
                self.model,
                self.shifted,
                sol.s,
                lam,
                self.chi(),
                self.Delta,
                self.ledger,
                cfg,
                self.instance.estimates.H_max,
                cap=self.cap,
            )
            contract_rec = out.to_record()
            solves += out.solves
            self.delta = out.delta_next
            if out.cached is not None:
                self.sol = self._adopt(out.cached)
                self.sol_solves, self.sol_cached = 0, True
            else:
                self.sol = self._solve_trust(self.delta)
                self.sol_solves, self.sol_cached = 1, False
            nn = self.sol.norm
            if nn > 0.0:
                self.sigma = max(self.sigma, self.sol.lambda_tr / nn)
        rec["contract"] = contract_rec
        rec["solves"] = solves
        rec["delta_next"] = float(self.delta)
        rec["Delta_next"] = float(self.Delta)
        rec["sigma_next"] = float(self.sigma)
        rec["wall_time"] = time.perf_counter() - t0
        self.k += 1
        return rec


# ---------------------------------------------------------------------------
# driver


@dataclass
class RunResult:
    x: np.ndarray
    trace: list
    reason: str
    header: dict
    summary: dict


TRACE_SCHEMA = "lctrace-trace/1"


def make_header(algorithm, instance, config, ledger, extra=None):
    doc = {
        "type": "header",
        "schema": TRACE_SCHEMA,
        "algorithm": algorithm,
        "instance": instance.to_dict(),
        "config": config.to_dict(),
        "ledger": ledger.to_dict(),
    }
    if extra:
        doc.update(extra)
    return doc


def summarize(records, reason, x, f, chi, psi=None, extra=None):
    counts = {}
    for r in records:
        key = r.get("step_class") or r.get("step_kind")
        counts[key] = counts.get(key, 0) + 1
    doc = {
        "type": "summary",
        "reason": reason,
        "iterations": len(records),
        "subproblem_solves": int(sum(r.get("solves", 0) for r in records)),
        "counts": counts,
        "x": _vec(x),
        "f": float(f),
        "chi": float(chi),
        "psi": None if psi is None else float(psi),
        "ties_fired": int(sum(1 for r in records if r.get("tie"))),
    }
    if extra:
        doc.update(extra)
    return doc


def run_first_order(instance, config, on_record=None):
    """Run the first-order method until ``chi <= epsilon`` or the iteration cap.

    ``on_record`` is called with each trace record as it is produced.
    """
    try:
        st = FirstOrderStepper(instance, config)
    except SubproblemError as exc:
        raise SolverFailure(f"initial subproblem failed: {exc}") from exc
    header = make_header("first_order", instance, config, st.ledger)
    records = []
    reason = None
    while True:
        if st.chi() <= config.epsilon:
            reason = STATIONARY
            break
        if st.k >= config.max_iterations:
            reason = ITERATION_CAP
            break
        try:
            rec = st.step()
        except SolverFailure as exc:
            exc.trace = records
            raise
        except SubproblemError as exc:
            raise SolverFailure(f"subproblem failure at k={st.k}: {exc}", records) from exc
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    summary = summarize(records, reason, st.x, st.f, st.chi(), extra={"max_Delta": max([r["Delta_next"] for r in records], default=st.Delta)})
    return RunResult(st.x.copy(), records, reason, header, summary)
