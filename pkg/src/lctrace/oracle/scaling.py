"""Log-log slope of iteration counts against ``1/eps``."""

from __future__ import annotations

import numpy as np


def scaling_fit(results):
    """Least-squares slope of ``log(count)`` against ``log(1/eps)``.

    ``results`` is a sequence of ``(eps, count)`` with at least three
    distinct ``eps``.  Constant counts give slope 0.
    """
    eps = np.array([float(e) for e, _ in results])
    counts = np.array([float(c) for _, c in results])
    if len(np.unique(eps)) < 3:
        raise ValueError("need at least three distinct tolerances")
    if np.any(counts <= 0.0):
        raise ValueError("counts must be positive")
    if np.all(counts == counts[0]):
        return 0.0
    slope, _ = np.polyfit(np.log(1.0 / eps), np.log(counts), 1)
    return float(slope)
