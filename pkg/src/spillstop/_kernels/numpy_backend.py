"""Pure-numpy/scipy implementations of the hot numeric kernels.

This is the fallback path used when numba is unavailable or disabled via
``SPILLSTOP_BACKEND=numpy``.  The numba backend mirrors these routines
one-to-one; ``tests/test_kernels.py`` asserts parity between the two.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import cho_solve_banded, cholesky_banded

COS_SINGULAR = 1e-6


def pendulum_rk4(th, ph, thd, phd, ax, ay, az, l, g, dt, substeps):
    """Classical RK4 on the nonlinear tilt dynamics.

    Returns (theta, phi, theta_dot, phi_dot, ok).  ok is False when any
    stage evaluation hits |cos(theta)| <= 1e-6 (tilt parametrization
    degenerates there).
    """
    h = dt / substeps
    for _ in range(substeps):
        k1 = _rhs(th, ph, thd, phd, ax, ay, az, l, g)
        if k1 is None:
            return th, ph, thd, phd, False
        s = (th + 0.5 * h * thd, ph + 0.5 * h * phd,
             thd + 0.5 * h * k1[0], phd + 0.5 * h * k1[1])
        k2 = _rhs(s[0], s[1], s[2], s[3], ax, ay, az, l, g)
        if k2 is None:
            return th, ph, thd, phd, False
        s = (th + 0.5 * h * (thd + 0.5 * h * k1[0]),
             ph + 0.5 * h * (phd + 0.5 * h * k1[1]),
             thd + 0.5 * h * k2[0], phd + 0.5 * h * k2[1])
        k3 = _rhs(s[0], s[1], s[2], s[3], ax, ay, az, l, g)
        if k3 is None:
            return th, ph, thd, phd, False
        s = (th + h * (thd + 0.5 * h * k2[0]),
             ph + h * (phd + 0.5 * h * k2[1]),
             thd + h * k3[0], phd + h * k3[1])
        k4 = _rhs(s[0], s[1], s[2], s[3], ax, ay, az, l, g)
        if k4 is None:
            return th, ph, thd, phd, False
        # position update uses the velocity stages, velocity update the
        # acceleration stages (RK4 on the first-order system)
        v1, v2, v3, v4 = (thd, thd + 0.5 * h * k1[0], thd + 0.5 * h * k2[0],
                          thd + h * k3[0])
        w1, w2, w3, w4 = (phd, phd + 0.5 * h * k1[1], phd + 0.5 * h * k2[1],
                          phd + h * k3[1])
        th = th + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        ph = ph + (h / 6.0) * (w1 + 2.0 * w2 + 2.0 * w3 + w4)
        thd = thd + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        phd = phd + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    return th, ph, thd, phd, True


def _rhs(th, ph, thd, phd, ax, ay, az, l, g):
    c_t = math.cos(th)
    if abs(c_t) <= COS_SINGULAR:
        return None
    s_t = math.sin(th)
    c_p = math.cos(ph)
    s_p = math.sin(ph)
    thdd = (-(g + az) * s_t * c_p + ax * c_t + ay * s_p * s_t
            - l * c_t * s_t * phd * phd) / l
    phdd = (-(g + az) * s_p - ay * c_p + 2.0 * l * phd * thd * s_t) / (l * c_t)
    return thdd, phdd


def banded_cholesky(ab):
    """In-place lower-banded Cholesky (LAPACK 'L' layout).  Returns ok."""
    try:
        ab[:] = cholesky_banded(ab, lower=True)
    except np.linalg.LinAlgError:
        return False
    except ValueError:
        return False
    return True


def banded_solve(ab, b):
    return cho_solve_banded((ab, True), b)


def admm_chunk(qv, Ap, Ai, Ax, Tp, Ti, Tx, lo, hi, rho, sigma, alpha,
               fac, x, z, y, iters):
    """Run `iters` ADMM sweeps in scaled space, mutating x, z, y."""
    n = x.shape[0]
    m = z.shape[0]
    A = sparse.csr_matrix((Ax, Ai, Ap), shape=(m, n), copy=False)
    AT = sparse.csr_matrix((Tx, Ti, Tp), shape=(n, m), copy=False)
    inv_rho = 1.0 / rho
    for _ in range(iters):
        rhs = sigma * x - qv + AT @ (rho * z - y)
        xt = cho_solve_banded((fac, True), rhs)
        zt = A @ xt
        x[:] = alpha * xt + (1.0 - alpha) * x
        zz = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zz + inv_rho * y, lo, hi)
        y += rho * (zz - z_new)
        z[:] = z_new
    return 0
