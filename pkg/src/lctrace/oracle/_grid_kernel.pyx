# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Exact grid minimum of a quadratic over ball and polyhedron (compiled).

The first ``n - 1`` grid coordinates are enumerated inside the ball; along
the last coordinate the feasible grid points form an integer interval and the
one-dimensional quadratic is minimized in closed form on it.
"""

import numpy as np

from libc.math cimport sqrt, floor, ceil, INFINITY


cdef double SNAP = 1e-9


cdef class _Sweep:
    cdef double[::1] g
    cdef double[:, ::1] H
    cdef double[:, ::1] A
    cdef double[:, ::1] rhs      # per-level remaining right-hand sides
    cdef double[::1] c0          # per-level constant term
    cdef double[::1] c1          # per-level coefficient of the last coordinate
    cdef double[::1] u
    cdef double[::1] best_pt
    cdef double best, R2, h
    cdef int n, m
    cdef long long lines

    def __init__(self, g, H, A, b, double radius, double h):
        self.n = g.shape[0]
        self.m = A.shape[0]
        self.g = np.ascontiguousarray(g, dtype=np.float64)
        self.H = np.ascontiguousarray(H, dtype=np.float64)
        self.A = np.ascontiguousarray(A, dtype=np.float64).reshape(self.m, self.n)
        rhs = np.zeros((self.n, self.m), dtype=np.float64)
        rhs[0, :] = b
        self.rhs = rhs
        self.c0 = np.zeros(self.n, dtype=np.float64)
        c1 = np.zeros(self.n, dtype=np.float64)
        c1[0] = g[self.n - 1]
        self.c1 = c1
        self.u = np.zeros(self.n, dtype=np.float64)
        self.best_pt = np.zeros(self.n, dtype=np.float64)
        self.best = INFINITY
        self.R2 = radius * radius
        self.h = h
        self.lines = 0

    cdef void line(self, double used2):
        cdef int d = self.n - 1
        cdef double rem = self.R2 - used2
        cdef double zmax, lo, hi, a, r, c2, z, v, jv
        cdef long long jlo, jhi, j
        cdef long long cand[4]
        cdef int i, nc
        if rem < 0.0:
            return
        zmax = sqrt(rem)
        lo = -zmax
        hi = zmax
        for i in range(self.m):
            a = self.A[i, d]
            r = self.rhs[d, i]
            if a > 0.0:
                if r / a < hi:
                    hi = r / a
            elif a < 0.0:
                if r / a > lo:
                    lo = r / a
            elif r < -1e-12:
                return
        jlo = <long long>ceil(lo / self.h - SNAP)
        jhi = <long long>floor(hi / self.h + SNAP)
        if jlo > jhi:
            return
        self.lines += 1
        c2 = self.H[d, d]
        nc = 2
        cand[0] = jlo
        cand[1] = jhi
        if c2 > 0.0:
            jv = -self.c1[d] / (c2 * self.h)
            if jv < jlo:
                jv = jlo
            if jv > jhi:
                jv = jhi
            for i in range(2):
                j = <long long>(floor(jv) if i == 0 else ceil(jv))
                if j < jlo:
                    j = jlo
                if j > jhi:
                    j = jhi
                cand[nc] = j
                nc += 1
        for i in range(nc):
            z = cand[i] * self.h
            v = self.c0[d] + self.c1[d] * z + 0.5 * c2 * z * z
            if v < self.best:
                self.best = v
                for j in range(d):
                    self.best_pt[j] = self.u[j]
                self.best_pt[d] = z
        return

    cdef void level(self, int d, double used2):
        cdef long long N, i
        cdef double ud, cross
        cdef int j, r
        cdef int last = self.n - 1
        if d == last:
            self.line(used2)
            return
        if used2 > self.R2:
            return
        N = <long long>floor(sqrt(self.R2 - used2) / self.h + SNAP)
        for i in range(-N, N + 1):
            ud = i * self.h
            self.u[d] = ud
            cross = 0.0
            for j in range(d):
                cross += self.H[d, j] * self.u[j]
            self.c0[d + 1] = self.c0[d] + self.g[d] * ud + ud * cross + 0.5 * self.H[d, d] * ud * ud
            self.c1[d + 1] = self.c1[d] + self.H[last, d] * ud
            for r in range(self.m):
                self.rhs[d + 1, r] = self.rhs[d, r] - self.A[r, d] * ud
            self.level(d + 1, used2 + ud * ud)

    def run(self):
        self.level(0, 0.0)
        return self.best, np.asarray(self.best_pt).copy(), self.lines


def sweep_quadratic(g, H, A, b, double radius, double h):
    """Minimum of ``g.s + 0.5 s.H.s`` over grid points ``h * Z^n`` with
    ``||s|| <= radius`` and ``A s <= b``.  Returns ``(value, point, lines)``;
    ``value`` is ``inf`` when no grid point is feasible."""
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    n = g.shape[0]
    H = np.asarray(H, dtype=np.float64).reshape(n, n)
    A = np.asarray(A, dtype=np.float64).reshape(-1, n)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return _Sweep(g, 0.5 * (H + H.T), A, b, radius, h).run()
