"""Time-domain vectored-thrust quadrotor model.

State vector x (9,):
    x[0:3]  p    inertial position [m]; the inertial z axis points down,
                 so "1 m above the start" is p[2] = -1.
    x[3:6]  v    inertial velocity [m/s]
    x[6:9]  Phi  Z-Y-X Euler angles (phi, theta, psi) [rad]; the attitude is
                 R = Rz(psi) @ Ry(theta) @ Rx(phi).

Input vector u (4,):
    u[0:3]  omega  body angular rates [rad/s] (commanded directly; the
                   rotational moment balance is out of scope)
    u[3]    f      total thrust magnitude [N], directed along -R e3 in the
                   sense that the translational dynamics are
                   v' = g e3 - (f/m) R e3.

Euler kinematics: Phi' = euler_rate_jacobian(Phi) @ omega, singular at
|cos(theta)| -> 0 (gimbal lock).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GimbalLockError

COS_THETA_FLOOR = 1e-9


def rotation_rpy(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-inertial rotation for Z-Y-X Euler angles."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def thrust_axis(phi: float, theta: float, psi: float) -> np.ndarray:
    """Third column of rotation_rpy: the body z axis in inertial coordinates."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf])


def euler_rate_jacobian(Phi: np.ndarray) -> np.ndarray:
    """Map body rates omega to Euler-angle rates: Phi' = J(Phi) @ omega."""
    phi, theta = Phi[0], Phi[1]
    ct = math.cos(theta)
    if abs(ct) < COS_THETA_FLOOR:
        raise GimbalLockError(f"euler rate map singular: |cos(theta)| = {abs(ct):.3e}")
    cf, sf = math.cos(phi), math.sin(phi)
    tt = math.tan(theta)
    return np.array(
        [
            [1.0, sf * tt, cf * tt],
            [0.0, cf, -sf],
            [0.0, sf / ct, cf / ct],
        ]
    )


def euler_rate_jacobian_inv(Phi: np.ndarray) -> np.ndarray:
    """Inverse map: omega = euler_rate_jacobian_inv(Phi) @ Phi'."""
    phi, theta = Phi[0], Phi[1]
    ct = math.cos(theta)
    if abs(ct) < COS_THETA_FLOOR:
        raise GimbalLockError(f"euler rate map singular: |cos(theta)| = {abs(ct):.3e}")
    cf, sf = math.cos(phi), math.sin(phi)
    st = math.sin(theta)
    return np.array(
        [
            [1.0, 0.0, -st],
            [0.0, cf, sf * ct],
            [0.0, -sf, cf * ct],
        ]
    )


def time_dynamics(x: np.ndarray, u: np.ndarray, mass: float, gravity: float = 9.81) -> np.ndarray:
    """Right-hand side of the time-domain model.

    Args:
        x: state (9,), see module docstring.
        u: input (4,), body rates and thrust.
        mass: vehicle mass [kg].
        gravity: gravitational acceleration [m/s^2], +z (down).

    Returns:
        dx/dt (9,).
    """
    Phi = x[6:9]
    out = np.empty(9)
    out[0:3] = x[3:6]
    out[3:6] = -(u[3] / mass) * thrust_axis(Phi[0], Phi[1], Phi[2])
    out[5] += gravity
    out[6:9] = euler_rate_jacobian(Phi) @ u[0:3]
    return out


def integrate_time(x0, u_of_t, t_grid, mass, gravity=9.81):
    """Fixed-step RK4 rollout of the time-domain model.

    Args:
        x0: initial state (9,).
        u_of_t: callable t -> input (4,).
        t_grid: strictly increasing times (M+1,); steps need not be uniform.
        mass, gravity: model parameters.

    Returns:
        states (M+1, 9) sampled on t_grid.

    Raises:
        GimbalLockError: if any stage state has |theta| >= pi/2.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    xs = np.empty((t_grid.size, 9))
    xs[0] = x0
    x = np.array(x0, dtype=float)
    for i in range(t_grid.size - 1):
        t0, t1 = t_grid[i], t_grid[i + 1]
        dt = t1 - t0
        tm = 0.5 * (t0 + t1)
        _check_pitch(x)
        k1 = time_dynamics(x, u_of_t(t0), mass, gravity)
        xa = x + 0.5 * dt * k1
        _check_pitch(xa)
        k2 = time_dynamics(xa, u_of_t(tm), mass, gravity)
        xb = x + 0.5 * dt * k2
        _check_pitch(xb)
        k3 = time_dynamics(xb, u_of_t(tm), mass, gravity)
        xc = x + dt * k3
        _check_pitch(xc)
        k4 = time_dynamics(xc, u_of_t(t1), mass, gravity)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xs[i + 1] = x
    return xs


def _check_pitch(x):
    if abs(x[7]) >= 0.5 * math.pi:
        raise GimbalLockError(f"pitch magnitude {abs(x[7]):.4f} rad reached pi/2")
