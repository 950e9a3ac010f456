"""Pure numpy/scipy implementations of the hot kernels.

These are the fallback for the compiled extension in ``_core``; both expose
the same three entry points (see ``kernels``).  The nonlinear divided
difference is evaluated in the factorized form

    G(a, b) = (sum_{j=0}^{p} |a|^{p-j} |b|^{j}) * (|a| - |b|) / (a - b)

which is free of catastrophic cancellation: when a and b share a sign the
trailing factor is exactly sign(a).  Below the equal-value switch the analytic
limit (p+1) |m|^{p-1} m with m = (a+b)/2 is used instead.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

NAME = "python"


def nl_gradient_deriv(a, b, p, eps):
    """Nodewise divided difference of |phi|^{p+1} and its derivative in `a`.

    Returns (G, dG/da).  The switch to the analytic limit fires when
    |a - b| <= eps * max(1, |a|, |b|).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aa = np.abs(a)
    ab = np.abs(b)
    diff = a - b
    near = np.abs(diff) <= eps * np.maximum(1.0, np.maximum(aa, ab))

    S = np.zeros_like(aa)
    dS = np.zeros_like(aa)
    for j in range(p + 1):
        S += aa ** (p - j) * ab**j
        if j < p:
            dS += (p - j) * aa ** (p - j - 1) * ab**j
    dS *= np.sign(a)

    safe = np.where(near, 1.0, diff)
    q = (aa - ab) / safe
    dq = (np.sign(a) * safe - (aa - ab)) / (safe * safe)
    G = S * q
    dG = dS * q + S * dq

    m = 0.5 * (a + b)
    am = np.abs(m)
    G_lim = (p + 1) * am ** (p - 1) * m
    dG_lim = 0.5 * p * (p + 1) * am ** (p - 1)
    return np.where(near, G_lim, G), np.where(near, dG_lim, dG)


def nl_gradient(a, b, p, eps):
    """Nodewise divided difference of |phi|^{p+1} (no derivative)."""
    return nl_gradient_deriv(a, b, p, eps)[0]


def _cyclic_tridiag(d, w, r):
    """Solve the cyclic tridiagonal system diag(d) + w on both off-diagonals
    (with periodic corner entries w) by Thomas plus a Sherman-Morrison
    correction."""
    m = d.shape[0]
    if m < 3:
        A = np.diag(d.astype(np.float64, copy=True))
        for i in range(m):
            A[i, (i + 1) % m] += w
            A[i, (i - 1) % m] += w
        return np.linalg.solve(A, r)

    gamma = -d[0]
    dmod = d.copy()
    dmod[0] -= gamma
    dmod[-1] -= w * w / gamma

    ab = np.zeros((3, m))
    ab[0, 1:] = w
    ab[1] = dmod
    ab[2, :-1] = w

    u = np.zeros(m)
    u[0] = gamma
    u[-1] = w
    sol = solve_banded((1, 1), ab, np.stack([r, u], axis=1))
    y, z = sol[:, 0], sol[:, 1]
    vy = y[0] + (w / gamma) * y[-1]
    vz = z[0] + (w / gamma) * z[-1]
    return y - (vy / (1.0 + vz)) * z


def solve_wide_cyclic(d, w, rhs):
    """Solve d[k] x[k] + w (x[k+2] + x[k-2]) = rhs[k] on the periodic ring Z_N.

    The +-2 coupling splits Z_N into stride-2 cycles (two for even N, one for
    odd N); each cycle is a cyclic tridiagonal system.
    """
    d = np.asarray(d, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = d.shape[0]
    x = np.empty_like(d)
    if n % 2 == 0:
        cycles = (np.arange(0, n, 2), np.arange(1, n, 2))
    else:
        cycles = ((2 * np.arange(n)) % n,)
    for idx in cycles:
        x[idx] = _cyclic_tridiag(d[idx], w, rhs[idx])
    return x
