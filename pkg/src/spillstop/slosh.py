"""Spherical-pendulum surrogate for liquid sloshing in an open container.

The liquid free surface is represented by a rigid pendulum whose tilt
angles (theta, phi) track the surface normal.  The rod length is chosen so
the pendulum's natural frequency matches the first lateral sloshing mode
of a cylindrical container, which makes the surrogate quantitatively
predictive for small tilt amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

GRAVITY = 9.81


class GimbalSingularity(RuntimeError):
    """Tilt parametrization degenerates at |cos(theta)| <= 1e-6."""


class UnsupportedShape(ValueError):
    """Rod-length estimation is only available for cylinders."""


@dataclass(frozen=True)
class ContainerGeometry:
    """Upright container holding the liquid.

    radius and fill height are in meters; shape must be "cylinder".
    """

    radius: float
    height: float
    shape: str = "cylinder"

    def __post_init__(self):
        if self.shape != "cylinder":
            raise UnsupportedShape(f"unsupported container shape: {self.shape!r}")
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")
        if not (math.isfinite(self.height) and self.height > 0.0):
            raise ValueError(f"height must be positive and finite, got {self.height}")


@dataclass(frozen=True)
class PendulumParams:
    length: float
    gravity: float = GRAVITY

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0.0):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        if not (math.isfinite(self.gravity) and self.gravity > 0.0):
            raise ValueError(f"gravity must be positive and finite, got {self.gravity}")


@dataclass(frozen=True)
class PendulumState:
    """Tilt angles [rad] and their rates [rad/s].

    The dynamics are evaluated away from |theta| = pi/2, where the phi
    equation degenerates; that boundary is guarded at evaluation time
    (GimbalSingularity) rather than at construction.
    """

    theta: float
    phi: float
    theta_dot: float
    phi_dot: float

    def __post_init__(self):
        for name in ("theta", "phi", "theta_dot", "phi_dot"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.theta_dot, self.phi_dot])


@dataclass(frozen=True)
class PivotAcceleration:
    """Cartesian acceleration of the pendulum pivot [m/s^2], world frame."""

    ax: float
    ay: float
    az: float

    def __post_init__(self):
        for name in ("ax", "ay", "az"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def pendulum_derivatives(s: PendulumState, a: PivotAcceleration,
                         p: PendulumParams) -> tuple[float, float]:
    """Angular accelerations (theta_ddot, phi_ddot) of the driven pendulum."""
    c_t = math.cos(s.theta)
    if abs(c_t) <= _kernels.COS_SINGULAR:
        raise GimbalSingularity(f"|cos(theta)| <= 1e-6 at theta={s.theta}")
    s_t = math.sin(s.theta)
    c_p = math.cos(s.phi)
    s_p = math.sin(s.phi)
    l = p.length
    g_eff = p.gravity + a.az
    theta_ddot = (-g_eff * s_t * c_p + a.ax * c_t + a.ay * s_p * s_t
                  - l * c_t * s_t * s.phi_dot ** 2) / l
    phi_ddot = (-g_eff * s_p - a.ay * c_p
                + 2.0 * l * s.phi_dot * s.theta_dot * s_t) / (l * c_t)
    return theta_ddot, phi_ddot


def integrate_pendulum(s: PendulumState, a: PivotAcceleration,
                       p: PendulumParams, dt: float,
                       substeps: int = 1) -> PendulumState:
    """Advance the pendulum by dt under constant pivot acceleration (RK4)."""
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    th, ph, thd, phd, ok = _kernels.pendulum_rk4(
        s.theta, s.phi, s.theta_dot, s.phi_dot,
        a.ax, a.ay, a.az, p.length, p.gravity, dt, substeps)
    if not ok:
        raise GimbalSingularity(
            f"|cos(theta)| <= 1e-6 during integration from theta={s.theta}")
    if not (math.isfinite(th) and math.isfinite(ph)
            and math.isfinite(thd) and math.isfinite(phd)):
        # numerical blowup means the tilt left any regime the model is
        # valid in; same terminal condition as hitting the gimbal band
        raise GimbalSingularity(
            f"pendulum state diverged integrating from theta={s.theta}")
    return PendulumState(th, ph, thd, phd)


@lru_cache(maxsize=1)
def first_j1prime_root(tol: float = 1e-10) -> float:
    """First positive root of J1' via bisection on the ascending series."""
    lo, hi = 1.5, 2.5
    flo = _j1_prime(lo)
    if flo * _j1_prime(hi) >= 0.0:
        raise RuntimeError("seed bracket [1.5, 2.5] does not straddle the root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if flo * _j1_prime(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
            flo = _j1_prime(lo)
    return 0.5 * (lo + hi)


def _j1_prime(x: float) -> float:
    # d/dx of the ascending series J1(x) = sum (-1)^m /(m!(m+1)!) (x/2)^(2m+1)
    half = 0.5 * x
    total = 0.0
    coeff = 1.0  # 1/(m! (m+1)!)
    for m in range(0, 24):
        if m > 0:
            coeff /= m * (m + 1)
        term = coeff * (2 * m + 1) * half ** (2 * m) * 0.5
        if m % 2 == 1:
            term = -term
        total += term
    return total


def estimate_rod_length(geom: ContainerGeometry, g: float = GRAVITY) -> float:
    """Pendulum rod length matching the container's first sloshing mode.

    f_n^2 = (g xi / R) tanh(h xi / R) with xi the first positive root of
    J1'; the rod length is g / f_n^2.
    """
    if not (math.isfinite(g) and g > 0.0):
        raise ValueError(f"g must be positive and finite, got {g}")
    xi = first_j1prime_root()
    k = xi / geom.radius
    f_n_sq = g * k * math.tanh(geom.height * k)
    return g / f_n_sq
