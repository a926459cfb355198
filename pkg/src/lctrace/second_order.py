"""Second-order method: first-order iterations interleaved with curvature steps.

While ``chi > eps_g`` one first-order iteration is run.  Otherwise the
negative-curvature witness ``d`` of ``psi`` is followed with stretch
``2 psi / H_tilde``, cut back by a ratio test when the full stretch would
leave the polyhedron.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

from .lc_trace import (
    ACCEPT_SIGMA,
    ITERATION_CAP,
    STATIONARY,
    FirstOrderStepper,
    RunResult,
    SolverConfig,
    SolverFailure,
    _mat,
    _vec,
    make_header,
    summarize,
)
from .problem import max_feasible_stretch
from .stationarity import psi_from_derivatives
from .subproblem import SubproblemError

CURVATURE = "curvature"
CLAMPED = "clamped_curvature"


@dataclass(frozen=True)
class SecondOrderConfig:
    eps_g: float = 1e-4
    eps_H: float = 1e-2
    inner: SolverConfig = field(default_factory=SolverConfig)
    h_tilde: float | None = None
    max_iterations: int = 1000

    def __post_init__(self):
        if not (self.eps_g > 0.0 and self.eps_H > 0.0):
            raise ValueError("eps_g and eps_H must be positive")
        if self.h_tilde is not None and not self.h_tilde > 0.0:
            raise ValueError("h_tilde must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.inner.epsilon != self.eps_g:
            object.__setattr__(self, "inner", replace(self.inner, epsilon=self.eps_g))

    def to_dict(self):
        return {
            "eps_g": self.eps_g,
            "eps_H": self.eps_H,
            "h_tilde": self.h_tilde,
            "max_iterations": self.max_iterations,
            "inner": self.inner.to_dict(),
        }


def run_second_order(instance, config, on_record=None):
    """Run until ``chi <= eps_g`` and ``psi <= eps_H`` or the iteration cap."""
    try:
        st = FirstOrderStepper(instance, config.inner)
    except SubproblemError as exc:
        raise SolverFailure(f"initial subproblem failed: {exc}") from exc
    h_tilde = config.h_tilde if config.h_tilde is not None else st.ledger.h_tilde
    header = make_header(
        "second_order",
        instance,
        config.inner,
        st.ledger,
        extra={"second_order": config.to_dict(), "h_tilde": h_tilde},
    )
    records = []
    k = 0
    psi_now = None
    reason = None

    def emit(rec):
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    try:
        while True:
            chi_k = st.chi()
            if chi_k > config.eps_g:
                psi_now = None
                if k >= config.max_iterations:
                    reason = ITERATION_CAP
                    break
                rec = st.step()
                rec["k"] = k
                rec["psi"] = None
                emit(rec)
                k += 1
                continue
            t0 = time.perf_counter()
            psi_now, d = psi_from_derivatives(st.g, st.H, st.shifted)
            if psi_now <= config.eps_H:
                reason = STATIONARY
                break
            if k >= config.max_iterations:
                reason = ITERATION_CAP
                break
            t_nom = 2.0 * psi_now / h_tilde
            t_max = max_feasible_stretch(instance.polyhedron, st.x, d)
            clamped = t_max < t_nom
            t = min(t_nom, t_max)
            x_next = st.x + t * d
            f_next = st.f + instance.objective.difference(st.x, t * d)
            rec = {
                "type": "iteration",
                "step_kind": CLAMPED if clamped else CURVATURE,
                "step_class": None,
                "k": k,
                "x": _vec(st.x),
                "f": float(st.f),
                "g": _vec(st.g),
                "H": _mat(st.H),
                "chi": float(chi_k),
                "psi": float(psi_now),
                "d": _vec(d),
                "t": float(t),
                "t_nominal": float(t_nom),
                "t_max": float(t_max) if math.isfinite(t_max) else None,
                "x_next": _vec(x_next),
                "f_next": float(f_next),
                "delta": float(st.delta),
                "Delta": float(st.Delta),
                "sigma": float(st.sigma),
                "solves": 0,
                "wall_time": 0.0,
            }
            st.reset_point(x_next)
            rec["wall_time"] = time.perf_counter() - t0
            emit(rec)
            k += 1
    except SolverFailure as exc:
        exc.trace = records
        raise
    except SubproblemError as exc:
        raise SolverFailure(f"subproblem failure at k={k}: {exc}", records) from exc

    if psi_now is None:
        psi_now, _ = psi_from_derivatives(st.g, st.H, st.shifted)
    summary = summarize(
        records,
        reason,
        st.x,
        st.f,
        st.chi(),
        psi_now,
        extra={
            "max_Delta": max([r.get("Delta_next", r["Delta"]) for r in records], default=st.Delta),
            "clamped_steps": sum(1 for r in records if r.get("step_kind") == CLAMPED),
        },
    )
    return RunResult(st.x.copy(), records, reason, header, summary)


# ---------------------------------------------------------------------------
# reduction bound replay


@dataclass
class ReductionEntry:
    k: int
    kind: str
    decrease: float
    bound: float
    margin: float
    ok: bool


@dataclass
class ReductionReport:
    entries: list
    clamped: list
    curvature: list

    @property
    def passed(self):
        return all(e.ok for e in self.entries) and all(e.ok for e in self.curvature)

    @property
    def violations(self):
        return [e.k for e in self.entries + self.curvature if not e.ok]

    def worst_margin(self):
        margins = [e.margin for e in self.entries + self.curvature]
        return min(margins) if margins else math.inf


def reduction_check(records, header, summary, tol=1e-8):
    """Replay the per-step objective reduction bound over a recorded trace.

    Covered steps are unclamped curvature steps and iterations that follow an
    accepted ratio-test step while ``chi > eps_g``.  For curvature steps the
    single-step decrease ``f_k - f_{k+1} >= 2 psi**3 / (3 H_tilde**2)`` is also
    checked.  Clamped curvature steps are listed, not asserted.
    """
    led = header["ledger"]
    cfg = header["config"]
    est = header["instance"]["estimates"]
    so = header.get("second_order", {})
    eps_g = so.get("eps_g", cfg["epsilon"])
    h_tilde = header.get("h_tilde", led["h_tilde"])
    rho = cfg["rho"]
    denom = (est["H_lip"] + led["sigma_max_bound"]) ** 1.5
    fs = [r["f"] for r in records] + [summary["f"]]
    chis = [r["chi"] for r in records] + [summary["chi"]]

    def first_term(k):
        return rho * max(chis[k], 0.0) ** 1.5 / denom

    entries, clamped, curvature = [], [], []
    for k, r in enumerate(records):
        kind = r.get("step_kind")
        if kind == CLAMPED:
            clamped.append(k)
            continue
        if kind != CURVATURE:
            continue
        psi_k = r["psi"]
        second = 2.0 * psi_k**3 / (3.0 * h_tilde**2)
        dec = fs[max(k - 1, 0)] - fs[k + 1]
        bound = min(first_term(k), second)
        tau = tol * (1.0 + abs(fs[k]))
        entries.append(ReductionEntry(k, "curvature", dec, bound, dec - bound, dec >= bound - tau))
        single = fs[k] - fs[k + 1]
        curvature.append(ReductionEntry(k, "curvature_single", single, second, single - second, single >= second - tau))
    for k in range(1, len(records) + 1):
        prev = records[k - 1]
        if prev.get("step_class") != ACCEPT_SIGMA or chis[k] <= eps_g:
            continue
        if k == len(records):
            dec = fs[k - 1] - fs[k]
        else:
            dec = fs[k - 1] - fs[k + 1]
        # the accepted-step argument gives the first term alone, which dominates the minimum
        bound = first_term(k)
        tau = tol * (1.0 + abs(fs[k - 1]))
        entries.append(ReductionEntry(k, "after_accept", dec, bound, dec - bound, dec >= bound - tau))
    entries.sort(key=lambda e: e.k)
    return ReductionReport(entries, clamped, curvature)
