"""Worst-case sub-problem budgets evaluated from a constants ledger."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from ..lc_trace import finalize_ledger


@dataclass(frozen=True)
class ComplexityBudget:
    k_sigma: int
    k_delta: int
    k_c: int
    k_c1: int
    k_total: int
    inputs: dict

    def to_dict(self):
        return asdict(self)


def _ceil_nonneg(v):
    if not math.isfinite(v):
        raise ValueError(f"budget term is not finite: {v}")
    return max(0, math.ceil(v))


def k_sigma(f_gap, rho, h_lip, sigma_max, eps):
    return _ceil_nonneg(f_gap * (h_lip + sigma_max) ** 1.5 / rho * eps**-1.5)


def k_delta(f_gap, rho, Delta0):
    return _ceil_nonneg(f_gap / (rho * Delta0**3))


def evaluate_budgets(ledger, config, estimates, f0, eps=None):
    """Budget terms for tolerance ``eps`` (default: the ledger's epsilon).

    ``sigma_lower`` depends on ``eps``, so the ledger is re-derived for a
    different tolerance from the same ``lambda0``.
    """
    if eps is not None and eps != ledger.epsilon:
        ledger = finalize_ledger(replace(config, epsilon=eps), estimates, ledger.lambda0)
    eps = ledger.epsilon
    f_gap = max(f0 - estimates.f_min, 0.0)
    lam_b = ledger.lambda_bound
    Dh = ledger.delta_cap_estimate
    ks = k_sigma(f_gap, config.rho, estimates.H_lip, ledger.sigma_max_bound, eps)
    kd = k_delta(f_gap, config.rho, config.Delta0)
    per_contract = 2.0 + math.log(ledger.sigma_max_bound / ledger.sigma_lower) / math.log(config.gamma_lambda)
    shrink = math.log(Dh * (ledger.c_min + lam_b) / eps) / math.log(1.0 / config.gamma_C)
    kc = 1 + _ceil_nonneg(per_contract * shrink)
    # natural logarithm, as written; clamped at zero
    kc1 = _ceil_nonneg(
        math.log((ledger.c_min + lam_b) * (estimates.H_max + estimates.g_lip + config.rho * Dh) / (ledger.sigma_lower * eps))
    )
    total = 1 + (ks + kd) * (1 + kc * kc1)
    inputs = {
        "f0": f0,
        "f_min": estimates.f_min,
        "rho": config.rho,
        "H_lip": estimates.H_lip,
        "sigma_max": ledger.sigma_max_bound,
        "Delta0": config.Delta0,
        "gamma_C": config.gamma_C,
        "gamma_lambda": config.gamma_lambda,
        "sigma_lower": ledger.sigma_lower,
        "c_min": ledger.c_min,
        "lambda_max": ledger.lambda_max,
        "lambda0": ledger.lambda0,
        "eps": eps,
    }
    return ComplexityBudget(ks, kd, kc, kc1, total, inputs)
