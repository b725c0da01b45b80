"""Independent reference implementations the tests check against.

Everything here is written straight from the defining equations with no
reuse of library internals, so a bug would have to appear twice to slip
through.
"""

import itertools
import math

import numpy as np

G = 9.81


def pendulum_energy(theta, phi, theta_dot, phi_dot, length, g=G):
    """Per-unit-mass energy of the hanging spherical pendulum.

    Kinetic term from the bob velocity in spherical coordinates, potential
    from the bob height -l*cos(theta)*cos(phi) below the pivot.
    """
    kinetic = 0.5 * length ** 2 * (theta_dot ** 2
                                   + phi_dot ** 2 * math.cos(theta) ** 2)
    potential = -g * length * math.cos(theta) * math.cos(phi)
    return kinetic + potential


def pendulum_equilibrium(ax, ay, az, g=G):
    """Static tilt where the pendulum hangs along gravity plus pivot accel."""
    phi = math.atan2(-ay, g + az)
    theta = math.atan2(ax, (g + az) * math.cos(phi) - ay * math.sin(phi))
    return theta, phi


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0],
                     [0, 0, 0, 1.0]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1.0, 0],
                     [0, 0, 0, 1.0]])


def _trans(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def fk_reference(a, d, alpha, q_full):
    """Forward kinematics by plain 4x4 chain products (modified DH).

    Link i frame follows RotX(alpha_i) TransX(a_i) RotZ(q_i) TransZ(d_i);
    arrays include the fixed flange row with q = 0.
    """
    T = np.eye(4)
    for i in range(len(a)):
        T = (T @ _rot_x(alpha[i]) @ _trans(a[i], 0, 0)
             @ _rot_z(q_full[i]) @ _trans(0, 0, d[i]))
    return T[:3, 3].copy(), T[:3, :3].copy()


def jacobian_fd(fk, q, eps=1e-7):
    """Geometric Jacobian by central differences of the pose map.

    Angular rows come from the rotation increment R(q+e)R(q-e)^T mapped
    through the log; exact enough at eps=1e-7 for 1e-5 comparisons.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    J = np.zeros((6, n))
    for j in range(n):
        dq = np.zeros(n)
        dq[j] = eps
        p_hi, r_hi = fk(q + dq)
        p_lo, r_lo = fk(q - dq)
        J[:3, j] = (p_hi - p_lo) / (2 * eps)
        dR = r_hi @ r_lo.T
        w = 0.5 * np.array([dR[2, 1] - dR[1, 2],
                            dR[0, 2] - dR[2, 0],
                            dR[1, 0] - dR[0, 1]])
        J[3:, j] = w / (2 * eps)
    return J


def solve_qp_active_set(H, f, A, l, u, tol=1e-9):
    """Exact minimizer of a small box-row QP by active-set enumeration.

    min 1/2 x'Hx + f'x  s.t.  l <= Ax <= u, H strictly PD.  Every row is
    tried inactive, at its lower bound, or at its upper bound; a KKT
    point must be primal feasible with correctly signed multipliers.
    Exponential in the row count, fine for the handful of rows used in
    tests.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    l = np.asarray(l, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    m = A.shape[0]
    best_x, best_obj = None, np.inf
    for assignment in itertools.product((0, -1, 1), repeat=m):
        act = [i for i in range(m) if assignment[i] != 0]
        b = np.array([l[i] if assignment[i] < 0 else u[i] for i in act])
        if act:
            Aa = A[act]
            K = np.block([[H, Aa.T],
                          [Aa, np.zeros((len(act), len(act)))]])
            rhs = np.concatenate([-f, b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:H.shape[0]]
            lam = sol[H.shape[0]:]
        else:
            x = np.linalg.solve(H, -f)
            lam = np.zeros(0)
        r = A @ x
        if np.any(r < l - tol) or np.any(r > u + tol):
            continue
        ok = True
        for lam_i, i in zip(lam, act):
            # stationarity is Hx + f + A' y = 0 with y >= 0 on upper
            # bounds and y <= 0 on lower bounds
            if assignment[i] > 0 and lam_i < -tol:
                ok = False
                break
            if assignment[i] < 0 and lam_i > tol:
                ok = False
                break
        if not ok:
            continue
        obj = 0.5 * x @ H @ x + f @ x
        if obj < best_obj - 1e-12:
            best_obj, best_x = obj, x
    return best_x, best_obj
