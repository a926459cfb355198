"""Trace I/O and offline replay of the per-iteration invariants.

Traces are UTF-8 JSON lines: a header, one record per iteration and a
closing summary.  ``check_trace`` re-derives every invariant from the
recorded numbers alone, without re-running the solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lc_trace import ACCEPT, ACCEPT_DELTA, ACCEPT_SIGMA, CONTRACT, EXPAND, TRACE_SCHEMA
from .problem import Polyhedron
from .subproblem import TAU_KKT

KNOWN_SCHEMAS = (TRACE_SCHEMA,)
REL_TOL = 1e-8


class TraceFormatError(ValueError):
    pass


def write_trace(path, header, records, summary):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in [header, *records, summary]:
            fh.write(json.dumps(doc, sort_keys=True, allow_nan=True))
            fh.write("\n")


def read_trace(path):
    """Returns ``(header, records, summary)``; refuses unknown schema versions."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace file")
    try:
        docs = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"line {exc.lineno}: {exc.msg}") from exc
    header = docs[0]
    if header.get("type") != "header":
        raise TraceFormatError("first record is not a header")
    if header.get("schema") not in KNOWN_SCHEMAS:
        raise TraceFormatError(f"unknown trace schema {header.get('schema')!r}")
    if docs[-1].get("type") != "summary":
        raise TraceFormatError("trace has no summary record")
    records = docs[1:-1]
    for r in records:
        if r.get("type") != "iteration":
            raise TraceFormatError(f"unexpected record type {r.get('type')!r}")
    return header, records, docs[-1]


@dataclass
class InvariantResult:
    name: str
    description: str
    worst_margin: float = math.inf
    violations: list = field(default_factory=list)
    checked: int = 0
    fatal: bool = True

    @property
    def passed(self):
        return not self.violations

    def observe(self, k, margin, scale):
        """Record ``margin >= 0`` up to the relative tolerance."""
        self.checked += 1
        m = float(margin)
        if m < self.worst_margin:
            self.worst_margin = m
        if not m >= -REL_TOL * (1.0 + abs(scale)):
            self.violations.append(k)


@dataclass
class CheckReport:
    results: list

    @property
    def passed(self):
        return all(r.passed for r in self.results if r.fatal)

    def failed(self):
        return [r for r in self.results if r.fatal and not r.passed]

    def by_name(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self):
        out = []
        for r in self.results:
            status = "ok" if r.passed else ("FAIL" if r.fatal else "warn")
            worst = "n/a" if r.checked == 0 else f"{r.worst_margin:.3e}"
            extra = f" at k={r.violations[:5]}" if r.violations else ""
            out.append(f"{status:4s} {r.name:34s} checked={r.checked:<5d} worst_margin={worst}{extra}  ({r.description})")
        return out


def _arr(v):
    return np.asarray(v, dtype=float)


def check_trace(header, records, summary):
    led = header["ledger"]
    cfg = header["config"]
    inst = header["instance"]
    est = inst["estimates"]
    poly = Polyhedron(_arr(inst["constraints"]["A"]).reshape(-1, inst["dimension"]), _arr(inst["constraints"]["b"]))
    lam_bound = max(led["lambda0"], led["lambda_max"])
    sigma_max = led["sigma_max_bound"]
    tau_eq = cfg["tau_eq"]
    rho_bar = cfg["rho"]

    R = {
        name: InvariantResult(name, desc)
        for name, desc in [
            ("sufficient_decrease", "f - q(s) >= s.(H + lam I).s / 2 + lam ||s||^2 / 2"),
            ("contract_shrinks_radius", "delta strictly decreases on every contraction"),
            ("radius_ordering", "delta <= Delta, Delta non-decreasing, delta non-decreasing on accept/expand"),
            ("no_expand_after_contract_or_expand", "an expansion never follows a contraction or an expansion"),
            ("multiplier_bound", "lambda <= max(lambda0, lambda_max)"),
            ("chi_step_bound", "chi <= (C_min + lambda) ||s|| for k >= 1"),
            ("sigma_bound", "sigma <= sigma_max"),
            ("accepted_step_lower_bound", "||s_k|| >= chi_{k+1}^(1/2) / (H_lip + sigma_max)^(1/2) on ratio-test accepts"),
            ("monotone_objective", "f never increases; accepted steps gain rho ||s||^3"),
            ("step_classification", "recorded class matches the acceptance predicates"),
            ("kkt_residuals", "recorded subproblem residuals within tolerance"),
            ("feasibility", "every iterate satisfies A x <= b"),
        ]
    }
    cap = InvariantResult("delta_cap_estimate", "max Delta stays below the a-priori cap estimate", fatal=False)
    tail = InvariantResult(
        "sigma_bound_after_last_cap_accept",
        "sigma <= max(sigma at the last Delta-cap accept, sigma_max) afterwards",
        fatal=False,
    )

    fs = [r["f"] for r in records] + [summary["f"]]
    chis = [r["chi"] for r in records] + [summary["chi"]]
    prev_fo = None  # previous first-order record when directly adjacent

    for i, r in enumerate(records):
        k = r["k"]
        x = _arr(r["x"])
        slack = poly.slack(x)
        R["feasibility"].observe(k, slack.min() if len(slack) else 0.0, 1.0)
        R["monotone_objective"].observe(k, fs[i] - fs[i + 1], fs[i])
        R["sigma_bound"].observe(k, sigma_max - r["sigma"], sigma_max)
        R["radius_ordering"].observe(k, r["Delta"] - r["delta"], r["Delta"])
        cap.observe(k, led["delta_cap_estimate"] - r.get("Delta_next", r["Delta"]), led["delta_cap_estimate"])

        if r.get("step_kind") != "first_order":
            prev_fo = None
            continue

        s = _arr(r["s"])
        ns = float(np.linalg.norm(s))
        lam = r["lambda"]
        g, H = _arr(r["g"]), _arr(r["H"]).reshape(len(s), len(s))
        sHs = float(s @ H @ s)
        dec = -(float(g @ s) + 0.5 * sHs)
        rhs = 0.5 * (sHs + lam * ns * ns) + 0.5 * lam * ns * ns
        R["sufficient_decrease"].observe(k, dec - rhs, max(abs(dec), abs(rhs)))

        kkt = r["kkt"]
        R["kkt_residuals"].observe(k, TAU_KKT - max(kkt["stationarity"], kkt["comp_lin"], kkt["comp_tr"]), 0.0)
        R["multiplier_bound"].observe(k, lam_bound - lam, lam_bound)
        if k >= 1:
            R["chi_step_bound"].observe(k, (led["c_min"] + lam) * ns - r["chi"], r["chi"])
        R["sigma_bound"].observe(k, sigma_max - r["sigma_next"], sigma_max)

        cls = r["step_class"]
        if r["rho"] < rho_bar:
            expected = CONTRACT
        elif abs(ns - r["Delta"]) <= tau_eq * r["Delta"]:
            expected = ACCEPT_DELTA
        elif lam / ns <= r["sigma"]:
            expected = ACCEPT_SIGMA
        else:
            expected = EXPAND
        R["step_classification"].observe(k, 0.0 if expected == cls else -1.0, 0.0)

        R["radius_ordering"].observe(k, r["Delta_next"] - r["Delta"], r["Delta"])
        R["radius_ordering"].observe(k, r["Delta_next"] - r["delta_next"], r["Delta_next"])
        if cls == CONTRACT:
            # strict: the margin must be positive, not merely within tolerance
            margin = r["delta"] - r["delta_next"]
            R["contract_shrinks_radius"].checked += 1
            R["contract_shrinks_radius"].worst_margin = min(R["contract_shrinks_radius"].worst_margin, margin)
            if not margin > 0.0:
                R["contract_shrinks_radius"].violations.append(k)
        else:
            R["radius_ordering"].observe(k, r["delta_next"] - r["delta"], r["delta"])

        if cls in ACCEPT:
            R["monotone_objective"].observe(k, fs[i] - fs[i + 1] - rho_bar * ns**3, fs[i])
            if cls == ACCEPT_SIGMA:
                bound = math.sqrt(max(chis[i + 1], 0.0) / (est["H_lip"] + sigma_max))
                R["accepted_step_lower_bound"].observe(k, ns - bound, ns)

        if cls == EXPAND and prev_fo is not None and prev_fo["step_class"] in (CONTRACT, EXPAND):
            R["no_expand_after_contract_or_expand"].observe(k, -1.0, 0.0)
        elif prev_fo is not None:
            R["no_expand_after_contract_or_expand"].observe(k, 0.0, 0.0)

        if prev_fo is not None and prev_fo["step_class"] not in ACCEPT:
            # x unchanged across rejected iterations; delta carried over exactly
            R["radius_ordering"].observe(k, -abs(r["delta"] - prev_fo["delta_next"]), r["delta"])
        prev_fo = r

    # the closed-form sigma_max ignores growth from Delta-cap accepts; replay
    # the bound only over the tail after the last such accept
    fo = [r for r in records if r.get("step_kind") == "first_order"]
    last = max((i for i, r in enumerate(fo) if r["step_class"] == ACCEPT_DELTA), default=-1)
    ceiling = max(sigma_max, fo[last]["sigma_next"]) if last >= 0 else sigma_max
    for r in fo[last + 1 :]:
        tail.observe(r["k"], ceiling - r["sigma_next"], ceiling)

    return CheckReport(list(R.values()) + [cap, tail])


def check_file(path):
    return check_trace(*read_trace(path))
