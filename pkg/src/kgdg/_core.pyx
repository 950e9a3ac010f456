# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: nonlinear divided difference and the periodic
wide-stencil linear solve.  Semantics match ``_kernels_py`` exactly; see that
module for the formulas."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

NAME = "compiled"


cdef inline double _sgn(double x) noexcept:
    if x > 0.0:
        return 1.0
    elif x < 0.0:
        return -1.0
    return 0.0


cdef inline double _ipow(double x, int n) noexcept:
    cdef double r = 1.0
    cdef int i
    for i in range(n):
        r *= x
    return r


def nl_gradient_deriv(a_in, b_in, int p, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(a_in, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.ascontiguousarray(b_in, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] G = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dG = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t k
    cdef int j
    cdef double aa, ab, diff, scale, S, dS, q, dq, m, am
    for k in range(n):
        aa = fabs(a[k])
        ab = fabs(b[k])
        diff = a[k] - b[k]
        scale = 1.0
        if aa > scale:
            scale = aa
        if ab > scale:
            scale = ab
        if fabs(diff) <= eps * scale:
            m = 0.5 * (a[k] + b[k])
            am = fabs(m)
            G[k] = (p + 1) * _ipow(am, p - 1) * m
            dG[k] = 0.5 * p * (p + 1) * _ipow(am, p - 1)
        else:
            S = 0.0
            dS = 0.0
            for j in range(p + 1):
                S += _ipow(aa, p - j) * _ipow(ab, j)
                if j < p:
                    dS += (p - j) * _ipow(aa, p - j - 1) * _ipow(ab, j)
            dS *= _sgn(a[k])
            q = (aa - ab) / diff
            dq = (_sgn(a[k]) * diff - (aa - ab)) / (diff * diff)
            G[k] = S * q
            dG[k] = dS * q + S * dq
    return G, dG


def nl_gradient(a_in, b_in, int p, double eps):
    return nl_gradient_deriv(a_in, b_in, p, eps)[0]


cdef void _cyclic_tridiag(double[::1] d, double w, double[::1] r,
                          double[::1] out, double[::1] work) noexcept:
    # Thomas + Sherman-Morrison on diag(d) with constant off-diagonal w and
    # periodic corners w.  work has length 3*m.
    cdef Py_ssize_t m = d.shape[0]
    cdef Py_ssize_t i
    cdef double gamma, denom, vy, vz
    cdef double[::1] cp = work[0:m]        # modified super-diagonal
    cdef double[::1] y = work[m:2 * m]     # solution of T y = r
    cdef double[::1] z = work[2 * m:3 * m]  # solution of T z = u

    gamma = -d[0]
    # forward sweep with modified diagonal entries at 0 and m-1
    denom = d[0] - gamma
    cp[0] = w / denom
    y[0] = r[0] / denom
    z[0] = gamma / denom
    for i in range(1, m):
        denom = d[i] - w * cp[i - 1]
        if i == m - 1:
            denom -= w * w / gamma
        cp[i] = w / denom
        y[i] = (r[i] - w * y[i - 1]) / denom
        z[i] = ((w if i == m - 1 else 0.0) - w * z[i - 1]) / denom
    for i in range(m - 2, -1, -1):
        y[i] -= cp[i] * y[i + 1]
        z[i] -= cp[i] * z[i + 1]
    vy = y[0] + (w / gamma) * y[m - 1]
    vz = z[0] + (w / gamma) * z[m - 1]
    for i in range(m):
        out[i] = y[i] - (vy / (1.0 + vz)) * z[i]


def solve_wide_cyclic(d_in, double w, rhs_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.ascontiguousarray(d_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rhs = np.ascontiguousarray(rhs_in, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dc = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rc = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xc = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(3 * n, dtype=np.float64)
    cdef Py_ssize_t i, m, idx, ncyc, c0
    if n % 2 == 0:
        ncyc = 2
        m = n // 2
    else:
        ncyc = 1
        m = n
    for c0 in range(ncyc):
        # gather the stride-2 cycle starting at node c0
        idx = c0
        for i in range(m):
            dc[i] = d[idx]
            rc[i] = rhs[idx]
            idx = (idx + 2) % n
        _cyclic_tridiag(dc[:m], w, rc[:m], xc[:m], work[:3 * m])
        idx = c0
        for i in range(m):
            x[idx] = xc[i]
            idx = (idx + 2) % n
    return x
