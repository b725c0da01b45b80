"""numba-jitted implementations of the hot numeric kernels.

Mirrors ``numpy_backend`` routine-for-routine.  All functions are nopython
compiled with on-disk caching so repeated CLI invocations skip compilation.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

COS_SINGULAR = 1e-6

_JIT = dict(cache=True, fastmath=False, nogil=True)


@njit(**_JIT)
def _rhs(th, ph, thd, phd, ax, ay, az, l, g):
    c_t = math.cos(th)
    if abs(c_t) <= COS_SINGULAR:
        return 0.0, 0.0, False
    s_t = math.sin(th)
    c_p = math.cos(ph)
    s_p = math.sin(ph)
    thdd = (-(g + az) * s_t * c_p + ax * c_t + ay * s_p * s_t
            - l * c_t * s_t * phd * phd) / l
    phdd = (-(g + az) * s_p - ay * c_p + 2.0 * l * phd * thd * s_t) / (l * c_t)
    return thdd, phdd, True


@njit(**_JIT)
def pendulum_rk4(th, ph, thd, phd, ax, ay, az, l, g, dt, substeps):
    h = dt / substeps
    for _ in range(substeps):
        a1t, a1p, ok = _rhs(th, ph, thd, phd, ax, ay, az, l, g)
        if not ok:
            return th, ph, thd, phd, False
        a2t, a2p, ok = _rhs(th + 0.5 * h * thd, ph + 0.5 * h * phd,
                            thd + 0.5 * h * a1t, phd + 0.5 * h * a1p,
                            ax, ay, az, l, g)
        if not ok:
            return th, ph, thd, phd, False
        a3t, a3p, ok = _rhs(th + 0.5 * h * (thd + 0.5 * h * a1t),
                            ph + 0.5 * h * (phd + 0.5 * h * a1p),
                            thd + 0.5 * h * a2t, phd + 0.5 * h * a2p,
                            ax, ay, az, l, g)
        if not ok:
            return th, ph, thd, phd, False
        a4t, a4p, ok = _rhs(th + h * (thd + 0.5 * h * a2t),
                            ph + h * (phd + 0.5 * h * a2p),
                            thd + h * a3t, phd + h * a3p,
                            ax, ay, az, l, g)
        if not ok:
            return th, ph, thd, phd, False
        v1 = thd
        v2 = thd + 0.5 * h * a1t
        v3 = thd + 0.5 * h * a2t
        v4 = thd + h * a3t
        w1 = phd
        w2 = phd + 0.5 * h * a1p
        w3 = phd + 0.5 * h * a2p
        w4 = phd + h * a3p
        th = th + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        ph = ph + (h / 6.0) * (w1 + 2.0 * w2 + 2.0 * w3 + w4)
        thd = thd + (h / 6.0) * (a1t + 2.0 * a2t + 2.0 * a3t + a4t)
        phd = phd + (h / 6.0) * (a1p + 2.0 * a2p + 2.0 * a3p + a4p)
    return th, ph, thd, phd, True


@njit(**_JIT)
def banded_cholesky(ab):
    """In-place lower-banded Cholesky, LAPACK 'L' layout: ab[i-j, j] = L[i, j]."""
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    for j in range(n):
        s = ab[0, j]
        k0 = j - bw
        if k0 < 0:
            k0 = 0
        for k in range(k0, j):
            s -= ab[j - k, k] * ab[j - k, k]
        if s <= 0.0:
            return False
        d = math.sqrt(s)
        ab[0, j] = d
        imax = j + bw
        if imax > n - 1:
            imax = n - 1
        for i in range(j + 1, imax + 1):
            s = ab[i - j, j]
            k0 = i - bw
            if k0 < 0:
                k0 = 0
            for k in range(k0, j):
                s -= ab[i - k, k] * ab[j - k, k]
            ab[i - j, j] = s / d
    return True


@njit(**_JIT)
def _banded_solve_into(ab, b, out):
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    # forward: L w = b
    for i in range(n):
        s = b[i]
        k0 = i - bw
        if k0 < 0:
            k0 = 0
        for k in range(k0, i):
            s -= ab[i - k, k] * out[k]
        out[i] = s / ab[0, i]
    # backward: L^T x = w
    for i in range(n - 1, -1, -1):
        s = out[i]
        kmax = i + bw
        if kmax > n - 1:
            kmax = n - 1
        for k in range(i + 1, kmax + 1):
            s -= ab[k - i, i] * out[k]
        out[i] = s / ab[0, i]
    return out


@njit(**_JIT)
def banded_solve(ab, b):
    out = np.empty_like(b)
    _banded_solve_into(ab, b, out)
    return out


@njit(**_JIT)
def _csr_matvec_into(indptr, indices, data, v, out):
    for i in range(out.shape[0]):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * v[indices[k]]
        out[i] = s
    return out


@njit(**_JIT)
def admm_chunk(qv, Ap, Ai, Ax, Tp, Ti, Tx, lo, hi, rho, sigma, alpha,
               fac, x, z, y, iters):
    n = x.shape[0]
    m = z.shape[0]
    rhs = np.empty(n)
    xt = np.empty(n)
    zt = np.empty(m)
    tmp = np.empty(m)
    for _ in range(iters):
        for i in range(m):
            tmp[i] = rho[i] * z[i] - y[i]
        _csr_matvec_into(Tp, Ti, Tx, tmp, rhs)
        for i in range(n):
            rhs[i] += sigma * x[i] - qv[i]
        _banded_solve_into(fac, rhs, xt)
        _csr_matvec_into(Ap, Ai, Ax, xt, zt)
        for i in range(n):
            x[i] = alpha * xt[i] + (1.0 - alpha) * x[i]
        for i in range(m):
            zz = alpha * zt[i] + (1.0 - alpha) * z[i]
            zn = zz + y[i] / rho[i]
            if zn < lo[i]:
                zn = lo[i]
            elif zn > hi[i]:
                zn = hi[i]
            y[i] += rho[i] * (zz - zn)
            z[i] = zn
    return 0
