"""Pure-numpy twin of the compiled grid sweep.

Same enumeration order and candidate set as the compiled kernel; the
second-to-last grid coordinate is vectorized.
"""

from __future__ import annotations

import math

import numpy as np

SNAP = 1e-9


def _lines(g, H, A, rhs, c0, c1, u_prefix, used2, R2, h):
    """Best value over the last coordinate for a batch of prefixes.

    ``rhs``, ``c0``, ``c1`` and ``used2`` are arrays over the batch.
    """
    d = len(g) - 1
    rem = R2 - used2
    ok = rem >= 0.0
    zmax = np.sqrt(np.where(ok, rem, 0.0))
    lo, hi = -zmax, zmax.copy()
    for i in range(A.shape[0]):
        a = A[i, d]
        r = rhs[i]
        if a > 0.0:
            hi = np.minimum(hi, r / a)
        elif a < 0.0:
            lo = np.maximum(lo, r / a)
        else:
            ok &= r >= -1e-12
    jlo = np.ceil(lo / h - SNAP)
    jhi = np.floor(hi / h + SNAP)
    ok &= jlo <= jhi
    if not np.any(ok):
        return math.inf, None, 0
    jlo, jhi, c0, c1 = jlo[ok], jhi[ok], c0[ok], c1[ok]
    c2 = H[d, d]
    cands = [jlo, jhi]
    if c2 > 0.0:
        jv = -c1 / (c2 * h)
        cands.append(np.clip(np.floor(jv), jlo, jhi))
        cands.append(np.clip(np.ceil(jv), jlo, jhi))
    best, arg, which = math.inf, None, None
    for j in cands:
        z = j * h
        v = c0 + c1 * z + 0.5 * c2 * z * z
        i = int(np.argmin(v))
        if v[i] < best:
            best, arg, which = float(v[i]), i, z[i]
    idx = np.flatnonzero(ok)[arg]
    pt = np.append(u_prefix[idx], which)
    return best, pt, int(ok.sum())


def sweep_quadratic(g, H, A, b, radius, h):
    g = np.asarray(g, dtype=float).reshape(-1)
    n = len(g)
    H = np.asarray(H, dtype=float).reshape(n, n)
    H = 0.5 * (H + H.T)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    R2 = radius * radius
    last = n - 1
    state = {"best": math.inf, "pt": np.zeros(n), "lines": 0}

    def consider(res):
        v, pt, cnt = res
        state["lines"] += cnt
        if v < state["best"]:
            state["best"], state["pt"] = v, pt

    if n == 1:
        consider(_lines(g, H, A, b[:, None], np.zeros(1), np.full(1, g[0]), np.zeros((1, 0)), np.zeros(1), R2, h))
        return state["best"], state["pt"], state["lines"]

    def level(d, u, rhs, c0, c1, used2):
        N = int(math.floor(math.sqrt(max(R2 - used2, 0.0)) / h + SNAP))
        if d == n - 2:
            # vectorize the second-to-last coordinate
            ud = np.arange(-N, N + 1) * h
            cross = float(H[d, :d] @ u) if d else 0.0
            c0v = c0 + g[d] * ud + ud * cross + 0.5 * H[d, d] * ud * ud
            c1v = c1 + H[last, d] * ud
            rhsv = rhs[:, None] - A[:, d][:, None] * ud[None, :]
            prefix = np.column_stack([np.tile(u, (len(ud), 1)), ud]) if d else ud[:, None]
            consider(_lines(g, H, A, rhsv, c0v, c1v, prefix, used2 + ud * ud, R2, h))
            return
        for i in range(-N, N + 1):
            ud = i * h
            cross = float(H[d, :d] @ u) if d else 0.0
            level(
                d + 1,
                np.append(u, ud),
                rhs - A[:, d] * ud,
                c0 + g[d] * ud + ud * cross + 0.5 * H[d, d] * ud * ud,
                c1 + H[last, d] * ud,
                used2 + ud * ud,
            )

    level(0, np.zeros(0), b.copy(), 0.0, g[last], 0.0)
    return state["best"], state["pt"], state["lines"]
