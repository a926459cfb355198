"""Central-difference checks of analytic gradients and Hessians."""

from __future__ import annotations

import numpy as np


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def finite_difference_check(model, points, h=1e-5):
    """Max relative error of ``model.gradient``/``model.hessian`` against central differences.

    The gradient is differenced from values and the Hessian from analytic
    gradients; errors are relative to ``max(1, ||analytic||)``.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        n = len(x)
        g = model.gradient(x)
        H = model.hessian(x)
        g_fd = np.empty(n)
        H_fd = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            g_fd[i] = (model.value(x + e) - model.value(x - e)) / (2.0 * h)
            H_fd[:, i] = (model.gradient(x + e) - model.gradient(x - e)) / (2.0 * h)
        worst = max(worst, _rel(g_fd, g), _rel(0.5 * (H_fd + H_fd.T), H))
    return worst
