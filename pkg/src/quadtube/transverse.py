"""Transverse coordinates about a reference path and the space-domain model.

Transverse state q (8,), relative to the moving frame at arc length s:
    q[0] w1   offset along the normal n [m]
    q[1] w2   offset along the binormal b [m]
    q[2] vt   velocity along t [m/s]   (must stay positive)
    q[3] vn   velocity along n [m/s]
    q[4] vb   velocity along b [m/s]
    q[5:8]    Euler angles (phi, theta, psi), same attitude as the
              time-domain model.

Input u (4,) is unchanged: body rates omega and thrust f.

With k = k(s), tau = tau(s) and the frame matrix R = [t n b]:

    s_dot = vt / (1 - k w1)
    w1'   = vn + tau s_dot w2          (time domain, TIME_*)
    w2'   = vb - tau s_dot w1
    vSF'  = R^T (g e3 - (f/m) Re3(Phi)) - S(k, tau) s_dot vSF
    Phi'  = J(Phi) omega
    S(k, tau) = [[0, -k, 0], [k, 0, -tau], [0, tau, 0]]

The space-domain right-hand side divides by s_dot:
    dq/ds = f_space = f_time * (1 - k w1) / vt,
valid while vt >= V_FLOOR and 1 - k w1 > 0.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SlowSpeedError, TubeBoundaryError
from .paths import FrameGrid, ReferencePath, frenet_at, project_point
from .quadrotor import (
    euler_rate_jacobian,
    euler_rate_jacobian_inv,
    rotation_rpy,
    thrust_axis,
)

W1, W2, VT, VN, VB, PHI, THETA, PSI = range(8)
OM1, OM2, OM3, F = range(4)

V_FLOOR = 0.05


def to_transverse(path: ReferencePath, x: np.ndarray, s_hint=None):
    """Map an inertial state to (s, q).

    Args:
        x: time-domain state (9,).
        s_hint: optional arc length seeding the closest-point search.

    Returns:
        (s, q) with q the transverse state (8,).
    """
    s, _ = project_point(path, x[0:3], s_hint=s_hint)
    fr = frenet_at(path, s)
    d = fr.R.T @ (x[0:3] - fr.p)
    v = fr.R.T @ x[3:6]
    q = np.empty(8)
    q[W1], q[W2] = d[1], d[2]
    q[VT], q[VN], q[VB] = v
    q[PHI:] = x[6:9]
    return s, q


def from_transverse(path: ReferencePath, s: float, q: np.ndarray) -> np.ndarray:
    """Inverse map: transverse state at arc length s to an inertial state."""
    fr = frenet_at(path, s)
    x = np.empty(9)
    x[0:3] = fr.p + fr.R @ np.array([0.0, q[W1], q[W2]])
    x[3:6] = fr.R @ q[VT : VB + 1]
    x[6:9] = q[PHI:]
    return x


def s_rate(q: np.ndarray, k: float) -> float:
    """Arc-length rate s_dot = vt / (1 - k w1)."""
    den = 1.0 - k * q[W1]
    if den <= 0.0:
        raise TubeBoundaryError(f"1 - k*w1 = {den:.4e} <= 0")
    return q[VT] / den


def _gravity_body(R, gravity):
    # R^T (g e3): third row of R scaled by g
    return gravity * R[2, :]


def time_rhs(q, u, k, tau, R, mass, gravity=9.81):
    """Time-domain transverse right-hand side q_dot (8,).

    k, tau, R are the frame data at the current arc length.
    """
    den = 1.0 - k * q[W1]
    if den <= 0.0:
        raise TubeBoundaryError(f"1 - k*w1 = {den:.4e} <= 0")
    sd = q[VT] / den
    acc = _gravity_body(R, gravity) - (u[F] / mass) * (R.T @ thrust_axis(q[PHI], q[THETA], q[PSI]))
    out = np.empty(8)
    out[W1] = q[VN] + tau * sd * q[W2]
    out[W2] = q[VB] - tau * sd * q[W1]
    out[VT] = acc[0] - sd * (-k * q[VN])
    out[VN] = acc[1] - sd * (k * q[VT] - tau * q[VB])
    out[VB] = acc[2] - sd * (tau * q[VN])
    out[PHI:] = euler_rate_jacobian(q[PHI:]) @ u[0:3]
    return out


def space_rhs(q, u, k, tau, R, mass, gravity=9.81, station=None):
    """Space-domain right-hand side dq/ds (8,).

    Raises:
        SlowSpeedError: vt < V_FLOOR.
        TubeBoundaryError: 1 - k w1 <= 0.
    """
    if q[VT] < V_FLOOR:
        raise SlowSpeedError(f"vt = {q[VT]:.4f} below floor", station=station)
    den = 1.0 - k * q[W1]
    if den <= 0.0:
        raise TubeBoundaryError(f"1 - k*w1 = {den:.4e} <= 0", station=station)
    eta = den / q[VT]  # ds/dt inverse: dt/ds
    acc = _gravity_body(R, gravity) - (u[F] / mass) * (R.T @ thrust_axis(q[PHI], q[THETA], q[PSI]))
    out = np.empty(8)
    out[W1] = eta * q[VN] + tau * q[W2]
    out[W2] = eta * q[VB] - tau * q[W1]
    out[VT] = eta * acc[0] + k * q[VN]
    out[VN] = eta * acc[1] - (k * q[VT] - tau * q[VB])
    out[VB] = eta * acc[2] - tau * q[VN]
    out[PHI:] = eta * (euler_rate_jacobian(q[PHI:]) @ u[0:3])
    return out


def space_jacobians(q, u, k, tau, R, mass, gravity=9.81):
    """Analytic Jacobians (A, B) of space_rhs w.r.t. q and u.

    Returns:
        A (8, 8), B (8, 4).
    """
    vt = q[VT]
    den = 1.0 - k * q[W1]
    eta = den / vt
    deta_dw1 = -k / vt
    deta_dvt = -den / vt / vt

    phi, theta, psi = q[PHI], q[THETA], q[PSI]
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)

    e3 = np.array([cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf])
    de3_dphi = np.array([-cp * st * sf + sp * cf, -sp * st * sf - cp * cf, -ct * sf])
    de3_dth = np.array([cp * ct * cf, sp * ct * cf, -st * cf])
    de3_dpsi = np.array([-sp * st * cf + cp * sf, cp * st * cf + sp * sf, 0.0])

    RT = R.T
    acc = gravity * R[2, :] - (u[F] / mass) * (RT @ e3)
    dacc_dPhi = -(u[F] / mass) * np.column_stack([RT @ de3_dphi, RT @ de3_dth, RT @ de3_dpsi])
    dacc_df = -(1.0 / mass) * (RT @ e3)

    J = euler_rate_jacobian(q[PHI:])
    tt = st / ct
    dJ_dphi = np.array([[0.0, cf * tt, -sf * tt], [0.0, -sf, -cf], [0.0, cf / ct, -sf / ct]])
    sec2 = 1.0 / (ct * ct)
    dJ_dth = np.array(
        [
            [0.0, sf * sec2, cf * sec2],
            [0.0, 0.0, 0.0],
            [0.0, sf * tt / ct, cf * tt / ct],
        ]
    )
    Jw = J @ u[0:3]
    dJw_dphi = dJ_dphi @ u[0:3]
    dJw_dth = dJ_dth @ u[0:3]

    A = np.zeros((8, 8))
    B = np.zeros((8, 4))

    # w1' = eta vn + tau w2
    A[W1, W1] = deta_dw1 * q[VN]
    A[W1, VT] = deta_dvt * q[VN]
    A[W1, VN] = eta
    A[W1, W2] = tau
    # w2' = eta vb - tau w1
    A[W2, W1] = deta_dw1 * q[VB] - tau
    A[W2, VT] = deta_dvt * q[VB]
    A[W2, VB] = eta
    # vt' = eta acc_t + k vn
    A[VT, W1] = deta_dw1 * acc[0]
    A[VT, VT] = deta_dvt * acc[0]
    A[VT, VN] = k
    A[VT, PHI:] = eta * dacc_dPhi[0, :]
    B[VT, F] = eta * dacc_df[0]
    # vn' = eta acc_n - k vt + tau vb
    A[VN, W1] = deta_dw1 * acc[1]
    A[VN, VT] = deta_dvt * acc[1] - k
    A[VN, VB] = tau
    A[VN, PHI:] = eta * dacc_dPhi[1, :]
    B[VN, F] = eta * dacc_df[1]
    # vb' = eta acc_b - tau vn
    A[VB, W1] = deta_dw1 * acc[2]
    A[VB, VT] = deta_dvt * acc[2]
    A[VB, VN] = -tau
    A[VB, PHI:] = eta * dacc_dPhi[2, :]
    B[VB, F] = eta * dacc_df[2]
    # Phi' = eta J omega
    A[PHI:, W1] = deta_dw1 * Jw
    A[PHI:, VT] = deta_dvt * Jw
    A[PHI:, PHI] = eta * dJw_dphi
    A[PHI:, THETA] = eta * dJw_dth
    B[PHI:, 0:3] = eta * J
    return A, B


def time_of_flight(s_grid: np.ndarray, q_nodes: np.ndarray, k_nodes: np.ndarray) -> float:
    """Composite trapezoidal duration T = integral of (1 - k w1)/vt ds."""
    integrand = (1.0 - k_nodes * q_nodes[:, W1]) / q_nodes[:, VT]
    return float(np.trapz(integrand, s_grid))


def integrate_space(frames: FrameGrid, q0: np.ndarray, u_nodes: np.ndarray, mass, gravity=9.81):
    """Open-loop RK4 rollout of space_rhs with piecewise-linear inputs.

    Args:
        frames: FrameGrid built with halves=True over the station grid.
        q0: initial transverse state (8,).
        u_nodes: inputs at stations (N+1, 4), interpolated linearly in s.

    Returns:
        states (N+1, 8).
    """
    s = frames.s[0::2]
    n_steps = s.size - 1
    qs = np.empty((n_steps + 1, 8))
    qs[0] = q0
    q = np.array(q0, dtype=float)
    for i in range(n_steps):
        h = s[i + 1] - s[i]
        ui, uj = u_nodes[i], u_nodes[i + 1]
        um = 0.5 * (ui + uj)
        ka, ta, Ra = frames.k[2 * i], frames.tau[2 * i], frames.R[2 * i]
        km, tm, Rm = frames.k[2 * i + 1], frames.tau[2 * i + 1], frames.R[2 * i + 1]
        kb, tb, Rb = frames.k[2 * i + 2], frames.tau[2 * i + 2], frames.R[2 * i + 2]
        k1 = space_rhs(q, ui, ka, ta, Ra, mass, gravity, station=i)
        k2 = space_rhs(q + 0.5 * h * k1, um, km, tm, Rm, mass, gravity, station=i)
        k3 = space_rhs(q + 0.5 * h * k2, um, km, tm, Rm, mass, gravity, station=i)
        k4 = space_rhs(q + h * k3, uj, kb, tb, Rb, mass, gravity, station=i)
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        qs[i + 1] = q
    return qs


def reconstruct_time_map(frames: FrameGrid, q_nodes: np.ndarray):
    """Stage-accurate duration map t(s) along a state sequence.

    Integrates dt/ds = (1 - k w1)/vt with RK4, evaluating the integrand at
    interval midpoints from cubic Hermite reconstruction of the states
    (fourth-order, unlike the trapezoid in time_of_flight).

    Returns:
        (t_nodes, dt_ds_nodes): cumulative time at stations and the
        integrand there (the Hermite slope data for inversion).
    """
    s = frames.s[0::2]
    k_st = frames.k[0::2]
    k_mid = frames.k[1::2]
    n = s.size - 1
    w1 = q_nodes[:, W1]
    vt = q_nodes[:, VT]
    phi_nodes = (1.0 - k_st * w1) / vt
    t = np.zeros(n + 1)
    for i in range(n):
        h = s[i + 1] - s[i]
        # Hermite midpoint of w1 and vt needs slopes; use parabolic estimate
        # from neighbor nodes (ends fall back to linear).
        w1m = _mid_hermite(w1, i)
        vtm = _mid_hermite(vt, i)
        phim = (1.0 - k_mid[i] * w1m) / vtm
        t[i + 1] = t[i] + (h / 6.0) * (phi_nodes[i] + 4.0 * phim + phi_nodes[i + 1])
    return t, phi_nodes


def _mid_hermite(y, i):
    """Midpoint of interval i by cubic through up to four surrounding nodes."""
    n = y.size - 1
    if 0 < i < n - 1:
        return (-y[i - 1] + 9.0 * y[i] + 9.0 * y[i + 1] - y[i + 2]) / 16.0
    return 0.5 * (y[i] + y[i + 1])


def invert_time_map(s_grid, t_nodes, phi_nodes, t_query):
    """Arc length s(t) from the cubic Hermite model of t(s).

    t_nodes and phi_nodes = dt/ds at the stations define a monotone cubic
    Hermite spline (phi > 0 always); each query is solved by safeguarded
    Newton inside its bracketing interval.
    """
    t_query = np.atleast_1d(np.asarray(t_query, dtype=float))
    out = np.empty_like(t_query)
    for j, tq in enumerate(t_query):
        tq = min(max(tq, t_nodes[0]), t_nodes[-1])
        i = int(np.clip(np.searchsorted(t_nodes, tq, side="right") - 1, 0, t_nodes.size - 2))
        h = s_grid[i + 1] - s_grid[i]
        # Hermite basis on x in [0, 1]
        t0, t1 = t_nodes[i], t_nodes[i + 1]
        m0, m1 = phi_nodes[i] * h, phi_nodes[i + 1] * h
        x = (tq - t0) / (t1 - t0) if t1 > t0 else 0.0
        for _ in range(30):
            h00 = 2 * x**3 - 3 * x**2 + 1
            h10 = x**3 - 2 * x**2 + x
            h01 = -2 * x**3 + 3 * x**2
            h11 = x**3 - x**2
            tv = h00 * t0 + h10 * m0 + h01 * t1 + h11 * m1
            dtv = (6 * x**2 - 6 * x) * t0 + (3 * x**2 - 4 * x + 1) * m0 + (
                -6 * x**2 + 6 * x
            ) * t1 + (3 * x**2 - 2 * x) * m1
            err = tv - tq
            if abs(err) < 1e-14 * max(1.0, abs(t1)):
                break
            if dtv <= 0:
                break
            x = min(max(x - err / dtv, 0.0), 1.0)
        out[j] = s_grid[i] + x * h
    return out if out.size > 1 else float(out[0])
