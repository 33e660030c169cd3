"""Projection-operator Newton solver over the space-domain model.

The decision variables are state/input curves on a fixed arc-length grid
(states at stations, inputs piecewise-linear between stations). A feedback
projection maps curves to trajectories:

    P(xi_c): integrate q' = f_space(q, u_c + K (q_c - q)) from q0,

with K(s) a regulator gain from a backward Riccati sweep. Interpolation
convention: the combination vch = u_c + K q_c and the gain K are each
interpolated linearly and the closed-loop input is vch(s) - K(s) q. This is
an O(h^2)-equivalent discretization of the same operator that makes P
numerically idempotent (P(P(xi)) == P(xi) to roundoff), which the projection
invariants require.

Smoothed cost of a trajectory:

    g(xi) = T(xi) + eps * integral(sum_j beta_nu(-c_j)) + terminal penalty
    T(xi) = integral (1 - k w1)/vt ds           (composite trapezoid)

Each Newton iteration: linearize, recompute the projection gain, build a
search direction from an LQ subproblem (Gauss-Newton barrier/cost weights
by default, full second variation behind a flag), certify descent with the
exact discrete gradient of the projected cost, then Armijo backtrack. An
outer continuation loop shrinks (eps, nu) geometrically, warm-starting each
round, and stops early once the time of flight stops improving while
feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    BarrierParams,
    BoundTable,
    ConstraintSet,
    TerminalTarget,
    beta_nu,
    beta_nu_d1,
    beta_nu_d2,
    terminal_penalty,
    terminal_penalty_grad,
)
from .errors import (
    GimbalLockError,
    IndefiniteHessianError,
    InfeasibleStartError,
    RiccatiError,
    SlowSpeedError,
    TubeBoundaryError,
)
from .paths import FrameGrid, ReferencePath
from .transverse import F, PHI, THETA, V_FLOOR, VT, W1, W2, space_jacobians, space_rhs

INPUT_RIDGE = 1e-9
FD_JACOBIAN_STEP = 1e-6
SUBSTEP_MAX = 16
# smooth guard keeping tangential speed off the rollout's hard floor, fixed
# weight so it does not fade with the constraint barrier's continuation; the
# wide extension region starts the push early enough that substep-level
# transients between stations stay clear of the floor too
FLOOR_GUARD_EPS = 1e-2
FLOOR_GUARD_NU = 0.5


@dataclass
class TrajectoryCurve:
    """State/input curve on the arc-length grid.

    s: stations (N+1,); q: states (N+1, 8); u: inputs (N+1, 4), interpreted
    as piecewise-linear between stations. A curve is a trajectory when it is
    a fixed point of the projection (re-projection defect below 1e-6).
    """

    s: np.ndarray
    q: np.ndarray
    u: np.ndarray

    def copy(self):
        return TrajectoryCurve(self.s.copy(), self.q.copy(), self.u.copy())

    def blend(self, zq, zu, gamma):
        return TrajectoryCurve(self.s, self.q + gamma * zq, self.u + gamma * zu)


@dataclass
class LinearizedSystem:
    """Station-sampled Jacobians of the space dynamics along a curve."""

    A: np.ndarray  # (N+1, 8, 8)
    B: np.ndarray  # (N+1, 8, 4)


@dataclass
class SolverConfig:
    N: int = 500
    Qr: np.ndarray | None = None  # projection regulator state weight (8x8)
    Rr: np.ndarray | None = None  # projection regulator input weight (4x4)
    armijo_alpha: float = 0.4
    armijo_beta: float = 0.5
    eps0: float = 1.0
    nu0: float = 0.5
    shrink: float = 0.2
    tol_grad: float = 1e-6
    max_newton: int = 40
    max_outer: int = 8
    use_gauss_newton: bool = True

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if not 0.0 < self.shrink <= 1.0:
            raise ValueError(f"shrink must lie in (0, 1], got {self.shrink}")
        if not 0.0 < self.armijo_alpha < 1.0:
            raise ValueError(f"armijo_alpha must lie in (0, 1), got {self.armijo_alpha}")
        if not 0.0 < self.armijo_beta < 1.0:
            raise ValueError(f"armijo_beta must lie in (0, 1), got {self.armijo_beta}")
        if self.eps0 <= 0 or self.nu0 <= 0:
            raise ValueError("eps0 and nu0 must be positive")
        if self.tol_grad <= 0:
            raise ValueError("tol_grad must be positive")
        if self.max_newton < 1 or self.max_outer < 1:
            raise ValueError("iteration budgets must be at least 1")

    def qr_matrix(self):
        return np.eye(8) if self.Qr is None else np.asarray(self.Qr, dtype=float)

    def rr_matrix(self):
        return np.eye(4) if self.Rr is None else np.asarray(self.Rr, dtype=float)


@dataclass
class IterationRecord:
    round_index: int
    iteration: int
    cost: float
    time_of_flight: float
    predicted_decrease: float
    step_length: float
    max_constraint: float


@dataclass
class RoundRecord:
    round_index: int
    epsilon: float
    nu: float
    iterations: int
    cost: float
    time_of_flight: float
    max_constraint: float
    status: str  # converged | stalled | max_iter


@dataclass
class Report:
    """Continuation run record.

    gain and schedule hold the projection operator the returned
    trajectory is a fixed point of; re-projecting under a freshly
    computed gain is not guaranteed to stay in the operator's domain
    (slow tails can sit at the edge of closed-loop rollout stability).
    """

    rounds: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    status: str = "converged"
    gain: np.ndarray | None = None
    schedule: np.ndarray | None = None

    @property
    def stalled(self):
        return self.status == "stalled"


class SolveContext:
    """Grid-resolved scenario data shared by all solver passes."""

    @classmethod
    def for_scenario(cls, scenario, N=None):
        return cls(
            scenario.path,
            scenario.constraints,
            scenario.params.mass,
            scenario.params.gravity,
            scenario.target,
            scenario.solver.N if N is None else N,
        )

    def __init__(self, path: ReferencePath, cs: ConstraintSet, mass: float,
                 gravity: float, target: TerminalTarget | None, N: int):
        self.path = path
        self.cs = cs
        self.mass = float(mass)
        self.gravity = float(gravity)
        self.target = target
        self.N = int(N)
        self.s = np.linspace(0.0, path.length, self.N + 1)
        self.h = self.s[1] - self.s[0]
        self.frames = FrameGrid.build(path, self.s, halves=True)
        self.bounds = BoundTable.build(cs, self.s)
        # trapezoid weights
        self.w_quad = np.full(self.N + 1, self.h)
        self.w_quad[0] = self.w_quad[-1] = 0.5 * self.h
        self.k_nodes = self.frames.k[0::2]
        self._frames_fine = None

    # frame accessors for interval i: left, middle, right grid entries
    def frame3(self, i):
        f = self.frames
        j = 2 * i
        return (
            (f.k[j], f.tau[j], f.R[j]),
            (f.k[j + 1], f.tau[j + 1], f.R[j + 1]),
            (f.k[j + 2], f.tau[j + 2], f.R[j + 2]),
        )

    def frames_fine(self):
        """Frames sampled every h/32, built on first use.

        Every power-of-two substep count up to 16 has its stage points on
        this grid, so substepped rollouts evaluate frames analytically
        rather than interpolating them.
        """
        if self._frames_fine is None:
            s_fine = np.linspace(0.0, self.path.length, 16 * self.N + 1)
            self._frames_fine = FrameGrid.build(self.path, s_fine, halves=True)
        return self._frames_fine


# -- cost pieces ---------------------------------------------------------------


def batch_constraints(ctx: SolveContext, q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Constraint values at every node, (N+1, count)."""
    cs, tb = ctx.cs, ctx.bounds
    m = q.shape[0]
    out = np.empty((m, cs.count))
    out[:, 0:3] = (u[:, 0:3] / cs.omega_max) ** 2 - 1.0
    df = cs.f_max - cs.f_min
    out[:, 3] = ((2.0 * u[:, F] - (cs.f_max + cs.f_min)) / df) ** 2 - 1.0
    out[:, 4] = (q[:, PHI] / tb.phi_max) ** 2 - 1.0
    out[:, 5] = (q[:, THETA] / tb.theta_max) ** 2 - 1.0
    if tb.rectangular:
        lo1, hi1, lo2, hi2 = tb.pos
        out[:, 6] = ((2.0 * q[:, W1] - (hi1 + lo1)) / (hi1 - lo1)) ** 2 - 1.0
        out[:, 7] = ((2.0 * q[:, W2] - (hi2 + lo2)) / (hi2 - lo2)) ** 2 - 1.0
    else:
        out[:, 6] = (q[:, W1] ** 2 + q[:, W2] ** 2) / tb.pos[0] ** 2 - 1.0
    return out


@dataclass
class CostBreakdown:
    total: float
    time_of_flight: float
    barrier_integral: float
    penalty: float
    max_constraint: float


def trajectory_cost(ctx: SolveContext, xi: TrajectoryCurve, bp: BarrierParams) -> CostBreakdown:
    """Smoothed cost of a trajectory (no projection applied here).

    Besides the constraint barrier, the cost carries a small fixed-weight
    guard on tangential speed: the rollout's domain ends abruptly at the
    speed floor, and without a smooth gradient there the line search only
    learns about the edge by stepping over it.
    """
    den = 1.0 - ctx.k_nodes * xi.q[:, W1]
    vt = xi.q[:, VT]
    tc = den / vt
    T = float(np.dot(ctx.w_quad, tc))
    c = batch_constraints(ctx, xi.q, xi.u)
    bsum = np.sum(beta_nu(-c, bp.nu), axis=1)
    b_int = float(np.dot(ctx.w_quad, bsum))
    xg = (vt - V_FLOOR) / V_FLOOR
    guard = FLOOR_GUARD_EPS * float(np.dot(ctx.w_quad, beta_nu(xg, FLOOR_GUARD_NU)))
    pen = terminal_penalty(ctx.target, xi.q[-1])
    total = T + bp.epsilon * b_int + guard + pen
    return CostBreakdown(
        total=total,
        time_of_flight=T,
        barrier_integral=b_int,
        penalty=pen,
        max_constraint=float(np.max(c)),
    )


def barrier_cost(ctx: SolveContext, xi: TrajectoryCurve, nu: float) -> float:
    """Integral of the summed relaxed barrier along the curve."""
    c = batch_constraints(ctx, xi.q, xi.u)
    return float(np.dot(ctx.w_quad, np.sum(beta_nu(-c, nu), axis=1)))


def stage_cost_gradients(ctx: SolveContext, q: np.ndarray, u: np.ndarray, bp: BarrierParams):
    """Node-wise gradients of the running cost density, (N+1, 8) and (N+1, 4)."""
    cs, tb = ctx.cs, ctx.bounds
    m = q.shape[0]
    lq = np.zeros((m, 8))
    lu = np.zeros((m, 4))
    k = ctx.k_nodes
    vt = q[:, VT]
    lq[:, W1] = -k / vt
    lq[:, VT] = -(1.0 - k * q[:, W1]) / vt**2
    xg = (vt - V_FLOOR) / V_FLOOR
    lq[:, VT] += FLOOR_GUARD_EPS * beta_nu_d1(xg, FLOOR_GUARD_NU) / V_FLOOR

    c = batch_constraints(ctx, q, u)
    d1 = beta_nu_d1(-c, bp.nu)  # beta'(x) at x = -c
    eps = bp.epsilon
    # d(beta(-c))/dz = -beta' * dc/dz
    lu[:, 0:3] += eps * (-d1[:, 0:3]) * 2.0 * u[:, 0:3] / cs.omega_max**2
    df = cs.f_max - cs.f_min
    lu[:, F] += eps * (-d1[:, 3]) * 4.0 * (2.0 * u[:, F] - (cs.f_max + cs.f_min)) / df**2
    lq[:, PHI] += eps * (-d1[:, 4]) * 2.0 * q[:, PHI] / tb.phi_max**2
    lq[:, THETA] += eps * (-d1[:, 5]) * 2.0 * q[:, THETA] / tb.theta_max**2
    if tb.rectangular:
        lo1, hi1, lo2, hi2 = tb.pos
        lq[:, W1] += eps * (-d1[:, 6]) * 4.0 * (2.0 * q[:, W1] - (hi1 + lo1)) / (hi1 - lo1) ** 2
        lq[:, W2] += eps * (-d1[:, 7]) * 4.0 * (2.0 * q[:, W2] - (hi2 + lo2)) / (hi2 - lo2) ** 2
    else:
        r2 = tb.pos[0] ** 2
        lq[:, W1] += eps * (-d1[:, 6]) * 2.0 * q[:, W1] / r2
        lq[:, W2] += eps * (-d1[:, 6]) * 2.0 * q[:, W2] / r2
    return lq, lu


def gauss_newton_weights(ctx: SolveContext, q: np.ndarray, u: np.ndarray, bp: BarrierParams):
    """PSD stage Hessian blocks (Q, R) of the running cost density.

    The indefinite 2x2 (w1, vt) block of the time-cost Hessian is replaced
    by its positive part; barrier blocks are PSD by construction. The cross
    block vanishes: every constraint depends on state or input alone.
    """
    cs, tb = ctx.cs, ctx.bounds
    m = q.shape[0]
    Qw = np.zeros((m, 8, 8))
    Rw = np.zeros((m, 4, 4))
    k = ctx.k_nodes
    vt = q[:, VT]
    bq = k / vt**2
    cq = 2.0 * (1.0 - k * q[:, W1]) / vt**3
    lam = 0.5 * cq + np.sqrt(0.25 * cq**2 + bq**2)
    n2 = bq**2 + lam**2
    scale = np.where(n2 > 0, lam / np.where(n2 > 0, n2, 1.0), 0.0)
    Qw[:, W1, W1] += scale * bq**2
    Qw[:, W1, VT] += scale * bq * lam
    Qw[:, VT, W1] += scale * bq * lam
    Qw[:, VT, VT] += scale * lam**2
    # floor guard is linear in vt, so this is its exact Hessian
    xg = (vt - V_FLOOR) / V_FLOOR
    Qw[:, VT, VT] += FLOOR_GUARD_EPS * beta_nu_d2(xg, FLOOR_GUARD_NU) / V_FLOOR**2

    c = batch_constraints(ctx, q, u)
    x = -c
    d1 = beta_nu_d1(x, bp.nu)
    d2 = beta_nu_d2(x, bp.nu)
    eps = bp.epsilon
    for i in range(3):
        g = 2.0 * u[:, i] / cs.omega_max[i] ** 2
        Rw[:, i, i] += eps * (d2[:, i] * g**2 + (-d1[:, i]) * 2.0 / cs.omega_max[i] ** 2)
    df = cs.f_max - cs.f_min
    gf = 4.0 * (2.0 * u[:, F] - (cs.f_max + cs.f_min)) / df**2
    Rw[:, F, F] += eps * (d2[:, 3] * gf**2 + (-d1[:, 3]) * 8.0 / df**2)
    gphi = 2.0 * q[:, PHI] / tb.phi_max**2
    Qw[:, PHI, PHI] += eps * (d2[:, 4] * gphi**2 + (-d1[:, 4]) * 2.0 / tb.phi_max**2)
    gth = 2.0 * q[:, THETA] / tb.theta_max**2
    Qw[:, THETA, THETA] += eps * (d2[:, 5] * gth**2 + (-d1[:, 5]) * 2.0 / tb.theta_max**2)
    if tb.rectangular:
        lo1, hi1, lo2, hi2 = tb.pos
        g1 = 4.0 * (2.0 * q[:, W1] - (hi1 + lo1)) / (hi1 - lo1) ** 2
        Qw[:, W1, W1] += eps * (d2[:, 6] * g1**2 + (-d1[:, 6]) * 8.0 / (hi1 - lo1) ** 2)
        g2 = 4.0 * (2.0 * q[:, W2] - (hi2 + lo2)) / (hi2 - lo2) ** 2
        Qw[:, W2, W2] += eps * (d2[:, 7] * g2**2 + (-d1[:, 7]) * 8.0 / (hi2 - lo2) ** 2)
    else:
        r2 = tb.pos[0] ** 2
        gw1 = 2.0 * q[:, W1] / r2
        gw2 = 2.0 * q[:, W2] / r2
        Qw[:, W1, W1] += eps * (d2[:, 6] * gw1**2 + (-d1[:, 6]) * 2.0 / r2)
        Qw[:, W1, W2] += eps * d2[:, 6] * gw1 * gw2
        Qw[:, W2, W1] += eps * d2[:, 6] * gw1 * gw2
        Qw[:, W2, W2] += eps * (d2[:, 6] * gw2**2 + (-d1[:, 6]) * 2.0 / r2)
    Rw += INPUT_RIDGE * np.eye(4)
    return Qw, Rw


# -- linearization -------------------------------------------------------------


def linearize(ctx: SolveContext, xi: TrajectoryCurve, mode: str = "analytic") -> LinearizedSystem:
    """Station Jacobians of the space dynamics along xi.

    mode "fd" cross-checks with central finite differences (slow; used by
    tests and diagnostics).
    """
    n = xi.q.shape[0]
    A = np.empty((n, 8, 8))
    B = np.empty((n, 8, 4))
    for i in range(n):
        k, tau, R = ctx.frames.k[2 * i], ctx.frames.tau[2 * i], ctx.frames.R[2 * i]
        if mode == "analytic":
            A[i], B[i] = space_jacobians(xi.q[i], xi.u[i], k, tau, R, ctx.mass, ctx.gravity)
        else:
            A[i], B[i] = _fd_jacobians(xi.q[i], xi.u[i], k, tau, R, ctx.mass, ctx.gravity)
    return LinearizedSystem(A=A, B=B)


def _fd_jacobians(q, u, k, tau, R, mass, gravity):
    A = np.empty((8, 8))
    B = np.empty((8, 4))
    for j in range(8):
        dq = np.zeros(8)
        dq[j] = FD_JACOBIAN_STEP
        A[:, j] = (
            space_rhs(q + dq, u, k, tau, R, mass, gravity)
            - space_rhs(q - dq, u, k, tau, R, mass, gravity)
        ) / (2 * FD_JACOBIAN_STEP)
    for j in range(4):
        du = np.zeros(4)
        du[j] = FD_JACOBIAN_STEP
        B[:, j] = (
            space_rhs(q, u + du, k, tau, R, mass, gravity)
            - space_rhs(q, u - du, k, tau, R, mass, gravity)
        ) / (2 * FD_JACOBIAN_STEP)
    return A, B


# -- Riccati sweeps ------------------------------------------------------------


def _interp(arr, i, frac):
    return arr[i] + frac * (arr[i + 1] - arr[i])


def _expm_stack(M):
    """Matrix exponential of a stack (n, m, m) by scaling and squaring.

    Interval transition matrices here have modest norms, so a fixed-order
    Taylor kernel after scaling is accurate to roundoff.
    """
    nrm = float(np.max(np.sum(np.abs(M), axis=-1))) if M.size else 0.0
    k = max(0, math.ceil(math.log2(nrm / 0.5))) if nrm > 0.5 else 0
    X = M / (2.0 ** k)
    eye = np.broadcast_to(np.eye(M.shape[-1]), M.shape)
    E = eye + X / 12.0
    for p in range(11, 0, -1):
        E = eye + (X @ E) / p
    for _ in range(k):
        E = E @ E
    return E


def _zoh_discretize(s, A, B, substeps):
    """Per-interval transition model (Ad, Bd) for piecewise-constant input.

    Coefficients are frozen at subinterval midpoints (linear interpolation
    of the station Jacobians) and the subinterval maps are chained: exact
    for the frozen model, second order in the coefficient variation.
    """
    n = s.size - 1
    nx = A.shape[-1]
    nu = B.shape[-1]
    h = np.diff(s) / substeps
    Ad = np.broadcast_to(np.eye(nx), (n, nx, nx)).copy()
    Bd = np.zeros((n, nx, nu))
    M = np.zeros((n, nx + nu, nx + nu))
    for j in range(substeps):
        f = (j + 0.5) / substeps
        M[:, :nx, :nx] = ((1.0 - f) * A[:-1] + f * A[1:]) * h[:, None, None]
        M[:, :nx, nx:] = ((1.0 - f) * B[:-1] + f * B[1:]) * h[:, None, None]
        E = _expm_stack(M)
        Ad = E[:, :nx, :nx] @ Ad
        Bd = E[:, :nx, :nx] @ Bd + E[:, :nx, nx:]
    return Ad, Bd


def _discrete_lq(Ad, Bd, Qd, Rd, Sd, ad, bd, P_end, r_end):
    """Backward value recursion for the interval-discretized LQ problem.

    Stage i pays 0.5 z'Qd[i]z + ad[i]'z at the left station plus
    0.5 v'Rd[i]v + bd[i]'v (+ z'Sd[i]v) for the interval input, with
    z_{i+1} = Ad[i] z + Bd[i] v; P_end / r_end already fold the last
    station's weights. The curvature enters through a solve, so stiff
    barrier weights cannot blow the sweep up.

    Returns (P, r, Kd, kd), or None when the data are non-finite.

    Raises:
        IndefiniteHessianError: an input curvature block Rd + Bd'PBd is
            not positive definite (full second variation only).
    """
    n, nx, nu = Bd.shape
    P = np.empty((n + 1, nx, nx))
    r = np.empty((n + 1, nx))
    Kd = np.empty((n, nu, nx))
    kd = np.empty((n, nu))
    P[n] = P_end
    r[n] = r_end
    for i in range(n - 1, -1, -1):
        BtP = Bd[i].T @ P[i + 1]
        Huu = Rd[i] + BtP @ Bd[i]
        Huu = 0.5 * (Huu + Huu.T)
        Hux = BtP @ Ad[i]
        if Sd is not None:
            Hux = Hux + Sd[i].T
        hu = bd[i] + Bd[i].T @ r[i + 1]
        try:
            np.linalg.cholesky(Huu)
        except np.linalg.LinAlgError:
            # separate roundoff leakage (P at barrier scale makes the
            # subtraction step lose ~1e-16 relative, which can push a
            # near-zero eigenvalue negative) from true indefiniteness
            lam = float(np.linalg.eigvalsh(Huu)[0])
            scale = float(np.trace(Huu)) / nu
            if lam < -1e-8 * max(scale, 1.0):
                raise IndefiniteHessianError(
                    f"input curvature block not positive definite at station {i}"
                ) from None
            Huu = Huu + (2.0 * abs(lam) + 1e-300) * np.eye(nu)
        Kd[i] = np.linalg.solve(Huu, Hux)
        kd[i] = np.linalg.solve(Huu, hu)
        Pm = Qd[i] + Ad[i].T @ P[i + 1] @ Ad[i] - Hux.T @ Kd[i]
        P[i] = 0.5 * (Pm + Pm.T)
        r[i] = ad[i] + Ad[i].T @ r[i + 1] - Hux.T @ kd[i]
        if not np.all(np.isfinite(P[i])):
            return None
    return P, r, Kd, kd


def lqr_gain(ctx: SolveContext, lin: LinearizedSystem, Qr, Rr):
    """Projection regulator gain K at stations, (N+1, 4, 8).

    Discrete backward Riccati on the interval transition model with running
    weights Qr, Rr and zero terminal weight, then K_i = Rr^-1 B_i' P_i.
    Zero terminal weight keeps the gain free of a terminal boundary layer
    that the closed-loop rollout could not follow at the station spacing.
    Retries with finer coefficient freezing before raising RiccatiError.
    """
    n = ctx.N
    h = np.diff(ctx.s)
    Qd = h[:, None, None] * np.broadcast_to(Qr, (n, 8, 8))
    Rd = h[:, None, None] * np.broadcast_to(Rr, (n, 4, 4))
    ad = np.zeros((n, 8))
    bd = np.zeros((n, 4))
    for substeps in (1, 2, 4, 8):
        Ad, Bd = _zoh_discretize(ctx.s, lin.A, lin.B, substeps)
        out = _discrete_lq(Ad, Bd, Qd, Rd, None, ad, bd, np.zeros((8, 8)), np.zeros(8))
        if out is not None:
            P = out[0]
            Rr_inv = np.linalg.inv(Rr)
            K = np.einsum("ab,ibc,icd->iad", Rr_inv, np.transpose(lin.B, (0, 2, 1)), P)
            return K
    raise RiccatiError("projection-gain Riccati sweep produced non-finite values")


# -- projection operator -------------------------------------------------------


def substep_schedule(ctx: SolveContext, q: np.ndarray) -> np.ndarray:
    """Per-interval RK4 substep counts for the closed-loop rollout.

    The projected family's feedback bandwidth scales with the input
    sensitivity eta/mass ~ 1/(mass vt), so slow intervals need shorter
    steps to keep the rollout contractive; a single step per station is
    unstable below roughly vt = 0.9 m/s on default grids. Counts are the
    power of two that holds the per-substep step-bandwidth product near
    one (RK4 contracts up to 2.78), capped at SUBSTEP_MAX, which covers
    every speed down to the hard floor.
    """
    vt = np.maximum(np.minimum(q[:-1, VT], q[1:, VT]), V_FLOOR)
    need = ctx.h / (ctx.mass * vt)
    n_sub = np.ones(ctx.N, dtype=np.int64)
    for m in (2, 4, 8, 16):
        n_sub[need > m // 2] = m
    return n_sub


def _interval_frames(ctx, fine, i, m):
    """Stage frames for interval i split into m substeps: per substep the
    (left, middle, right) triples, from the coarse grid when m == 1."""
    if m == 1:
        return [ctx.frame3(i)]
    step = 32 // m
    base = 32 * i
    out = []
    for j in range(m):
        g0 = base + j * step
        gm = g0 + step // 2
        g1 = g0 + step
        out.append(
            (
                (fine.k[g0], fine.tau[g0], fine.R[g0]),
                (fine.k[gm], fine.tau[gm], fine.R[gm]),
                (fine.k[g1], fine.tau[g1], fine.R[g1]),
            )
        )
    return out


def project(ctx: SolveContext, curve: TrajectoryCurve, K: np.ndarray, q0: np.ndarray,
            want_stages: bool = False, n_sub: np.ndarray | None = None):
    """Closed-loop RK4 rollout mapping a curve to a trajectory.

    n_sub fixes per-interval substep counts (powers of two); by default
    they come from the curve's own speed profile. The blend vch and the
    gain are interpolated linearly in s at substep stage points. Returns
    the trajectory, and when want_stages is set also the per-substep
    stage states/inputs needed by the exact gradient.
    """
    s = ctx.s
    n = ctx.N
    if n_sub is None:
        n_sub = substep_schedule(ctx, curve.q)
    vch = curve.u + np.einsum("ijk,ik->ij", K, curve.q)
    qs = np.empty((n + 1, 8))
    us = np.empty((n + 1, 4))
    q = np.array(curve.q[0] if q0 is None else q0, dtype=float)
    qs[0] = q
    stages = [] if want_stages else None
    fine = ctx.frames_fine() if np.any(n_sub > 1) else None
    for i in range(n):
        h = s[i + 1] - s[i]
        m = int(n_sub[i])
        hs = h / m
        Ki, Kj = K[i], K[i + 1]
        vi, vj = vch[i], vch[i + 1]
        frames = _interval_frames(ctx, fine, i, m)
        row = [] if want_stages else None
        us[i] = vi - Ki @ q
        for j in range(m):
            (ka, ta, Ra), (km, tm, Rm), (kb, tb, Rb) = frames[j]
            t0 = j / m
            th = (j + 0.5) / m
            t1 = (j + 1) / m
            Ka = (1.0 - t0) * Ki + t0 * Kj
            Km = (1.0 - th) * Ki + th * Kj
            Kb = (1.0 - t1) * Ki + t1 * Kj
            va = (1.0 - t0) * vi + t0 * vj
            vm = (1.0 - th) * vi + th * vj
            vb = (1.0 - t1) * vi + t1 * vj
            ua = va - Ka @ q
            k1 = space_rhs(q, ua, ka, ta, Ra, ctx.mass, ctx.gravity, station=i)
            qb = q + 0.5 * hs * k1
            ub = vm - Km @ qb
            k2 = space_rhs(qb, ub, km, tm, Rm, ctx.mass, ctx.gravity, station=i)
            qc = q + 0.5 * hs * k2
            uc = vm - Km @ qc
            k3 = space_rhs(qc, uc, km, tm, Rm, ctx.mass, ctx.gravity, station=i)
            qd = q + hs * k3
            ud = vb - Kb @ qd
            k4 = space_rhs(qd, ud, kb, tb, Rb, ctx.mass, ctx.gravity, station=i)
            if want_stages:
                row.append((q.copy(), ua, qb, ub, qc, uc, qd, ud))
            q = q + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if want_stages:
            stages.append(row)
        qs[i + 1] = q
    us[n] = vch[n] - K[n] @ q
    traj = TrajectoryCurve(s=s, q=qs, u=us)
    if want_stages:
        return traj, stages
    return traj


def projection_defect(ctx: SolveContext, xi: TrajectoryCurve, K: np.ndarray,
                      n_sub: np.ndarray | None = None) -> float:
    """Sup-norm re-projection defect; ~roundoff when xi is a trajectory."""
    again = project(ctx, xi, K, xi.q[0], n_sub=n_sub)
    return float(max(np.max(np.abs(again.q - xi.q)), np.max(np.abs(again.u - xi.u))))


def projected_cost_gradient(ctx: SolveContext, xi: TrajectoryCurve, K: np.ndarray,
                            bp: BarrierParams, n_sub: np.ndarray | None = None,
                            stages=None):
    """Exact gradient of gamma -> cost(P(xi + gamma * zeta)) at gamma = 0.

    Returns gv (N+1, 4): the gradient in the vch = u + K q parameterization.
    For a direction zeta = (zq, zu) the directional derivative is
    sum_i gv[i] . (zu[i] + K[i] zq[i]). The adjoint sweep mirrors the
    rollout's substep chain exactly, stage for stage. Pass the stages
    recorded when xi itself was rolled to avoid re-rolling: an iterate
    skimming the speed floor survives its own rollout but a re-roll
    perturbs it at roundoff level, which is enough to trip the guard.
    """
    if n_sub is None:
        n_sub = substep_schedule(ctx, xi.q)
    if stages is not None:
        traj = xi
    else:
        traj, stages = project(ctx, xi, K, xi.q[0], want_stages=True, n_sub=n_sub)
    lq, lu = stage_cost_gradients(ctx, traj.q, traj.u, bp)
    w = ctx.w_quad
    n = ctx.N
    gv = np.zeros((n + 1, 4))
    p = terminal_penalty_grad(ctx.target, traj.q[-1]) + w[n] * (lq[n] - K[n].T @ lu[n])
    gv[n] = w[n] * lu[n]
    I8 = np.eye(8)
    fine = ctx.frames_fine() if np.any(n_sub > 1) else None
    for i in range(n - 1, -1, -1):
        h = ctx.s[i + 1] - ctx.s[i]
        m = int(n_sub[i])
        hs = h / m
        Ki, Kj = K[i], K[i + 1]
        frames = _interval_frames(ctx, fine, i, m)
        row = stages[i]
        for j in range(m - 1, -1, -1):
            (ka, ta, Ra), (km, tm, Rm), (kb, tb, Rb) = frames[j]
            t0 = j / m
            th = (j + 0.5) / m
            t1 = (j + 1) / m
            Ka = (1.0 - t0) * Ki + t0 * Kj
            Km = (1.0 - th) * Ki + th * Kj
            Kb = (1.0 - t1) * Ki + t1 * Kj
            qa, ua, qb, ub, qc, uc, qd, ud = row[j]
            A1, B1 = space_jacobians(qa, ua, ka, ta, Ra, ctx.mass, ctx.gravity)
            A2, B2 = space_jacobians(qb, ub, km, tm, Rm, ctx.mass, ctx.gravity)
            A3, B3 = space_jacobians(qc, uc, km, tm, Rm, ctx.mass, ctx.gravity)
            A4, B4 = space_jacobians(qd, ud, kb, tb, Rb, ctx.mass, ctx.gravity)
            Ab1 = A1 - B1 @ Ka
            Ab2 = A2 - B2 @ Km
            Ab3 = A3 - B3 @ Km
            Ab4 = A4 - B4 @ Kb
            # vch enters each stage at its own fraction: weight (1 - t) on
            # vch[i], t on vch[i + 1]
            k1_q = Ab1
            k1_vi = (1.0 - t0) * B1
            k1_vj = t0 * B1
            t_q = I8 + 0.5 * hs * k1_q
            t_vi = 0.5 * hs * k1_vi
            t_vj = 0.5 * hs * k1_vj
            k2_q = Ab2 @ t_q
            k2_vi = Ab2 @ t_vi + (1.0 - th) * B2
            k2_vj = Ab2 @ t_vj + th * B2
            t_q = I8 + 0.5 * hs * k2_q
            t_vi = 0.5 * hs * k2_vi
            t_vj = 0.5 * hs * k2_vj
            k3_q = Ab3 @ t_q
            k3_vi = Ab3 @ t_vi + (1.0 - th) * B3
            k3_vj = Ab3 @ t_vj + th * B3
            t_q = I8 + hs * k3_q
            t_vi = hs * k3_vi
            t_vj = hs * k3_vj
            k4_q = Ab4 @ t_q
            k4_vi = Ab4 @ t_vi + (1.0 - t1) * B4
            k4_vj = Ab4 @ t_vj + t1 * B4
            Phi_q = I8 + (hs / 6.0) * (k1_q + 2 * k2_q + 2 * k3_q + k4_q)
            Phi_vi = (hs / 6.0) * (k1_vi + 2 * k2_vi + 2 * k3_vi + k4_vi)
            Phi_vj = (hs / 6.0) * (k1_vj + 2 * k2_vj + 2 * k3_vj + k4_vj)
            gv[i + 1] += Phi_vj.T @ p
            gv[i] += Phi_vi.T @ p
            p = Phi_q.T @ p
        p += w[i] * (lq[i] - Ki.T @ lu[i])
        gv[i] += w[i] * lu[i]
    return gv


def directional_derivative(ctx, gv, K, zq, zu) -> float:
    """Dg . zeta from a precomputed gradient gv (see projected_cost_gradient)."""
    dv = zu + np.einsum("ijk,ik->ij", K, zq)
    return float(np.sum(gv * dv))


# -- Newton direction ----------------------------------------------------------


def full_newton_weights(ctx: SolveContext, xi: TrajectoryCurve, lin: LinearizedSystem,
                        lq: np.ndarray, lu: np.ndarray, bp: BarrierParams,
                        ridge: float = 0.0):
    """Second-variation stage weights: cost Hessian + adjoint-weighted
    dynamics curvature (finite differences of the analytic Jacobians).

    ridge is the Levenberg-Marquardt shift already chosen by the caller;
    it is folded into the input blocks before the definiteness check so a
    damped model only fails when damping cannot rescue it.

    Raises IndefiniteHessianError if any damped input block is not
    positive definite.
    """
    n = ctx.N
    # adjoint: -lam' = A^T lam + lq, lam(L) = terminal gradient
    lam = np.empty((n + 1, 8))
    lam[n] = terminal_penalty_grad(ctx.target, xi.q[-1])
    for i in range(n - 1, -1, -1):
        h = ctx.s[i + 1] - ctx.s[i]

        def dlam(v, frac):
            Ai = _interp(lin.A, i, frac)
            ai = _interp(lq, i, frac)
            return -(Ai.T @ v + ai)

        v = lam[i + 1]
        k1 = dlam(v, 1.0)
        k2 = dlam(v - 0.5 * h * k1, 0.5)
        k3 = dlam(v - 0.5 * h * k2, 0.5)
        k4 = dlam(v - h * k3, 0.0)
        lam[i] = v - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    # exact cost Hessian blocks (no PSD projection) plus dynamics curvature
    Qgn, Rgn = gauss_newton_weights(ctx, xi.q, xi.u, bp)
    # undo the PSD projection of the time-cost block: replace by exact values
    k = ctx.k_nodes
    vt = xi.q[:, VT]
    bq = k / vt**2
    cq = 2.0 * (1.0 - k * xi.q[:, W1]) / vt**3
    lam_p = 0.5 * cq + np.sqrt(0.25 * cq**2 + bq**2)
    n2 = bq**2 + lam_p**2
    scale = np.where(n2 > 0, lam_p / np.where(n2 > 0, n2, 1.0), 0.0)
    Qgn[:, W1, W1] += 0.0 - scale * bq**2
    Qgn[:, W1, VT] += bq - scale * bq * lam_p
    Qgn[:, VT, W1] += bq - scale * bq * lam_p
    Qgn[:, VT, VT] += cq - scale * lam_p**2

    Qw = Qgn
    Rw = Rgn
    Sw = np.zeros((n + 1, 8, 4))
    delta = 1e-5
    for i in range(n + 1):
        kf, tf, Rf = ctx.frames.k[2 * i], ctx.frames.tau[2 * i], ctx.frames.R[2 * i]
        lam_i = lam[i]
        H = np.empty((12, 12))
        for j in range(12):
            zq = np.zeros(8)
            zu = np.zeros(4)
            if j < 8:
                zq[j] = delta
            else:
                zu[j - 8] = delta
            Ap, Bp = space_jacobians(xi.q[i] + zq, xi.u[i] + zu, kf, tf, Rf, ctx.mass, ctx.gravity)
            Am, Bm = space_jacobians(xi.q[i] - zq, xi.u[i] - zu, kf, tf, Rf, ctx.mass, ctx.gravity)
            gp = np.concatenate([Ap.T @ lam_i, Bp.T @ lam_i])
            gm = np.concatenate([Am.T @ lam_i, Bm.T @ lam_i])
            H[:, j] = (gp - gm) / (2 * delta)
        H = 0.5 * (H + H.T)
        Qw[i] += H[0:8, 0:8]
        Sw[i] += H[0:8, 8:12]
        Rw[i] += H[8:12, 8:12]
    if ridge > 0.0:
        Rw = Rw + ridge * np.eye(4)
    eigs = np.linalg.eigvalsh(Rw)
    if eigs[:, 0].min() <= 0.0:
        i = int(np.argmin(eigs[:, 0]))
        raise IndefiniteHessianError(
            f"input Hessian block not positive definite at station {i} "
            f"(min eig {eigs[i, 0]:.3e})"
        )
    return Qw, Sw, Rw


def newton_direction(ctx: SolveContext, xi: TrajectoryCurve, lin: LinearizedSystem,
                     bp: BarrierParams, cfg: SolverConfig, K: np.ndarray,
                     gv: np.ndarray, mu: float = 0.0):
    """LQ search direction (zq, zu) at stations.

    The subproblem is posed in the projected family's own coordinates: a
    perturbation dv of the reference input vch = u + K q drives the
    closed-loop linearization z' = (A - B K) z + B dv from z(0) = 0, and
    the exact reduced gradient gv is the only linear term. The model
    decrease gv . dv is then strictly negative whenever gv is nonzero,
    because each stage's input-curvature block is positive definite, so
    the direction is descent for the projected cost by construction.
    Gauss-Newton curvature by default; cfg.use_gauss_newton False switches
    to the full second variation. mu adds Levenberg-Marquardt damping to
    the input curvature, shortening the step toward scaled steepest
    descent when the quadratic model is trusted less. Sweeps retry with
    finer coefficient freezing and raise RiccatiError when the data stay
    non-finite.
    """
    if cfg.use_gauss_newton:
        Qw, Rw = gauss_newton_weights(ctx, xi.q, xi.u, bp)
        Sw = None
        if mu > 0.0:
            Rw = Rw + mu * np.eye(4)
    else:
        lq, lu = stage_cost_gradients(ctx, xi.q, xi.u, bp)
        Qw, Sw, Rw = full_newton_weights(ctx, xi, lin, lq, lu, bp, ridge=mu)
    n = ctx.N
    w = ctx.w_quad
    # curvature in (z, dv) coordinates, substituting du = dv - K z
    KtR = np.einsum("ikj,ikl->ijl", K, Rw)
    Qt = Qw + np.einsum("ija,iak->ijk", KtR, K)
    St = -KtR
    if Sw is not None:
        SwK = np.einsum("ijl,ilk->ijk", Sw, K)
        Qt = Qt - SwK - SwK.transpose(0, 2, 1)
        St = St + Sw
    A_cl = lin.A - np.einsum("ijk,ikl->ijl", lin.B, K)
    if ctx.target is not None:
        P_end = ctx.target.rho * np.eye(8) + w[n] * Qt[n]
    else:
        P_end = w[n] * Qt[n]
    r_end = np.zeros(8)

    Qd = w[:n, None, None] * Qt[:n]
    Rd = w[:n, None, None] * Rw[:n]
    Sd = w[:n, None, None] * St[:n]
    ad = np.zeros((n, 8))
    bd = gv[:n]

    for substeps in (1, 2, 4, 8):
        Ad, Bd = _zoh_discretize(ctx.s, A_cl, lin.B, substeps)
        out = _discrete_lq(Ad, Bd, Qd, Rd, Sd, ad, bd, P_end, r_end)
        if out is None:
            continue
        _, _, Kd, kd = out
        zq = np.zeros((n + 1, 8))
        dv = np.empty((n + 1, 4))
        z = np.zeros(8)
        for i in range(n):
            dv[i] = -(Kd[i] @ z + kd[i])
            z = Ad[i] @ z + Bd[i] @ dv[i]
            zq[i + 1] = z
        # the last station's input still drives the final interval through
        # the piecewise-linear blend (half weight), so its curvature must
        # include the terminal state response or the solve is gradient
        # against nothing
        Bh = 0.5 * Bd[n - 1]
        Huu_n = w[n] * Rw[n] + Bh.T @ P_end @ Bh
        dv[n] = -np.linalg.solve(Huu_n, gv[n] + w[n] * (St[n].T @ z))
        # map back to blend coordinates: zu + K zq = dv
        zu = dv - np.einsum("ijk,ik->ij", K, zq)
        if np.all(np.isfinite(zq)) and np.all(np.isfinite(zu)):
            return zq, zu
    raise RiccatiError("newton-direction sweep produced non-finite values")


# -- line search and inner loop ------------------------------------------------


_ROLLING_ERRORS = (SlowSpeedError, TubeBoundaryError, GimbalLockError)


def _candidate_cost(ctx, curve, K, q0, bp, n_sub=None):
    """Project a curve and evaluate its smoothed cost honestly.

    A candidate that slows below the given schedule's validity is
    re-rolled at the schedule its own speed profile demands, so the cost
    of every returned trajectory is evaluated at adequate rollout
    resolution. Returns (trajectory, cost, schedule, stages); failures
    map to (None, inf, schedule, None). The stages come from the same
    rollout that produced the trajectory, so gradient sweeps never need
    to re-roll an accepted iterate.
    """
    if n_sub is None:
        n_sub = substep_schedule(ctx, curve.q)
    for _ in range(4):
        try:
            traj, stages = project(ctx, curve, K, q0, want_stages=True, n_sub=n_sub)
            cb = trajectory_cost(ctx, traj, bp)
        except _ROLLING_ERRORS:
            return None, math.inf, n_sub, None
        if not math.isfinite(cb.total):
            return None, math.inf, n_sub, None
        need = substep_schedule(ctx, traj.q)
        if not np.any(need > n_sub):
            return traj, cb.total, n_sub, stages
        n_sub = np.maximum(n_sub, need)
    return None, math.inf, n_sub, None


def line_search(ctx: SolveContext, xi: TrajectoryCurve, zq, zu, pd: float, K, bp,
                cfg: SolverConfig, cost0: float, n_sub=None):
    """Armijo backtracking on the projected cost.

    cost0 is the search family's cost at gamma = 0, which equals the
    current iterate's cost because the iterate is a fixed point of the
    round's projection gain and rollout resolution. Projection failures
    (speed floor, tube boundary, attitude singularity) count as infinite
    cost; a candidate that needs finer rollout resolution is costed at
    its own schedule. Returns (gamma, trajectory, cost, schedule, stages);
    gamma = 0 after 30 shrinks means the search failed at this damping
    level.
    """
    gamma = 1.0
    for _ in range(31):
        traj, cost, used, stages = _candidate_cost(ctx, xi.blend(zq, zu, gamma), K,
                                                   xi.q[0], bp, n_sub=n_sub)
        if cost <= cost0 + cfg.armijo_alpha * gamma * pd:
            return gamma, traj, cost, used, stages
        gamma *= cfg.armijo_beta
    return 0.0, None, cost0, n_sub, None


def solve_inner(ctx: SolveContext, xi: TrajectoryCurve, bp: BarrierParams,
                cfg: SolverConfig, round_index: int = 0, K: np.ndarray | None = None,
                n_sub0: np.ndarray | None = None, mu0: float = 0.0):
    """Newton descent at fixed barrier parameters.

    The projection gain and the rollout substep schedule are both frozen
    for the whole round (computed from the round-start trajectory), so
    every iterate lives in one projection family and accepted costs
    decrease monotonically; the schedule's stability margin covers the
    speed drift one round can produce, and the next round re-anchors at
    the updated resolution. The search direction uses a fresh
    linearization at every iteration, with Levenberg-Marquardt damping mu
    adapted from line-search outcomes: a rejected step raises mu and
    retries rather than counting as failure, so a stall is declared only
    when even resolution-limit steps cannot descend. mu0 seeds the
    damping (warm rounds pass the previous round's settled value).
    Returns (trajectory, records, status, n_sub, mu) with status
    converged / stalled / max_iter.

    Raises:
        InfeasibleStartError: the round-start trajectory has non-finite
            smoothed cost.
    """
    cb = trajectory_cost(ctx, xi, bp)
    if not math.isfinite(cb.total):
        raise InfeasibleStartError("initial trajectory has non-finite smoothed cost")
    if K is None:
        lin = linearize(ctx, xi)
        K = lqr_gain(ctx, lin, cfg.qr_matrix(), cfg.rr_matrix())
    n_start = substep_schedule(ctx, xi.q)
    if n_sub0 is not None:
        # a previous round may have adopted a finer rollout than the speed
        # profile alone suggests; dropping back is what diverges
        n_start = np.maximum(n_start, n_sub0)
    anchored, total, n_sub, stages = _candidate_cost(ctx, xi, K, xi.q[0], bp,
                                                     n_sub=n_start)
    if anchored is None:
        return xi, [], "stalled", n_sub, mu0
    xi = anchored
    cb = trajectory_cost(ctx, xi, bp)
    records = []
    status = "max_iter"
    mu = mu0
    h_bar = float(np.mean(ctx.w_quad))
    gmax = 0.0
    h_bar = float(np.mean(ctx.w_quad))
    for it in range(cfg.max_newton):
        lin = linearize(ctx, xi)
        gv = projected_cost_gradient(ctx, xi, K, bp, n_sub=n_sub, stages=stages)
        gmax = float(np.abs(gv).max())
        try:
            zq, zu = newton_direction(ctx, xi, lin, bp, cfg, K, gv, mu)
        except (IndefiniteHessianError, RiccatiError):
            # full-Newton curvature can be indefinite away from a
            # minimizer; damp harder until the model is convex again
            mu = max(16.0 * mu, gmax / h_bar)
            continue
        pd = directional_derivative(ctx, gv, K, zq, zu)
        if pd > cfg.tol_grad:
            # non-descent direction from indefinite curvature
            mu = max(16.0 * mu, gmax / h_bar)
            continue
        if pd >= -cfg.tol_grad:
            if mu <= 1e-9:
                status = "converged"
                break
            # the model is stationary only because damping strangled it;
            # release and re-aim rather than declaring convergence
            mu = 0.0 if mu < 1e-6 else 0.0625 * mu
            continue
        if abs(pd) < 1e-13 * max(1.0, cb.total):
            # predicted decrease below the cost's float resolution
            status = "converged"
            break
        dvmax = float(np.abs(zu + np.einsum("ijk,ik->ij", K, zq)).max())
        if abs(pd) > 10.0 * max(abs(cb.total), 1.0):
            # the model claims it can erase many times the whole cost;
            # don't waste a backtrack ladder confirming it is wrong
            gamma, traj = 0.0, None
        else:
            gamma, traj, cost, n_used, st_new = line_search(ctx, xi, zq, zu, pd, K,
                                                            bp, cfg, cb.total,
                                                            n_sub=n_sub)
        if gamma == 0.0:
            records.append(
                IterationRecord(round_index, it, cb.total, cb.time_of_flight, pd, 0.0,
                                cb.max_constraint)
            )
            if abs(pd) < 10.0 * cfg.tol_grad:
                # the search cannot realize a decrease this small
                status = "converged"
                break
            if dvmax < 1e-8:
                # damping already shrank steps to numerical dust
                status = "stalled"
                break
            # reject the step, damp harder, retry (trust-region shrink);
            # the seed targets a unit input arc when the undamped step is
            # wild, and the observed arc otherwise
            mu = max(16.0 * mu, gmax / (h_bar * min(max(dvmax, 1e-9), 1.0)))
            continue
        if gamma >= 1.0:
            mu = 0.0 if mu < 1e-9 else 0.5 * mu
        elif gamma < 0.25:
            # short accepted step: grow damping by a bounded factor only,
            # arc-targeting here feeds back on itself and diverges
            mu = max(4.0 * mu, gmax / (h_bar * min(max(dvmax, 1e-9), 1.0)))
        # middling steps leave mu alone: decaying it here is what makes
        # the step length oscillate against the barrier wall
        xi = traj
        n_sub = n_used
        stages = st_new
        cb = trajectory_cost(ctx, xi, bp)
        records.append(
            IterationRecord(round_index, it, cb.total, cb.time_of_flight, pd, gamma,
                            cb.max_constraint)
        )
    return xi, records, status, n_sub, mu


def _refresh_gain(ctx: SolveContext, xi: TrajectoryCurve, bp: BarrierParams,
                  cfg: SolverConfig, K_prev: np.ndarray | None,
                  n_sub0: np.ndarray | None = None):
    """Pick the projection gain for a continuation round.

    A fresh gain moves the projection fixed point by O(h^2) per unit gain
    change, and near the barrier junction that small shift can cost more
    than the better-conditioned projection saves. Keep the inherited gain
    unless re-projecting under the fresh one is actually cheaper at the
    round's barrier parameters.
    """
    try:
        lin = linearize(ctx, xi)
        K_new = lqr_gain(ctx, lin, cfg.qr_matrix(), cfg.rr_matrix())
    except RiccatiError:
        if K_prev is None:
            raise
        return K_prev
    if K_prev is None:
        return K_new
    n_sub = substep_schedule(ctx, xi.q)
    if n_sub0 is not None:
        n_sub = np.maximum(n_sub, n_sub0)
    _, cost_new, _, _ = _candidate_cost(ctx, xi, K_new, xi.q[0], bp, n_sub=n_sub)
    _, cost_old, _, _ = _candidate_cost(ctx, xi, K_prev, xi.q[0], bp, n_sub=n_sub)
    if not math.isfinite(cost_new) and not math.isfinite(cost_old):
        return K_prev
    return K_new if cost_new < cost_old else K_prev


def solve_continuation(scenario, cfg: SolverConfig | None = None,
                       xi0: TrajectoryCurve | None = None,
                       ctx: SolveContext | None = None):
    """Outer barrier continuation: shrink (eps, nu), warm-start each round.

    Stops early when the round-to-round time of flight improves by less
    than 1e-4 relative while the iterate is feasible (max c_j <= 1e-6).
    Returns (trajectory, report).
    """
    if cfg is None:
        cfg = scenario.solver
    if ctx is None:
        ctx = SolveContext.for_scenario(scenario, cfg.N)
    if xi0 is None:
        from .scenarios import initial_trajectory  # deferred: scenarios imports solver

        xi0 = initial_trajectory(scenario, ctx=ctx, cfg=cfg)
    report = Report()
    xi = xi0
    bp0 = BarrierParams(cfg.eps0, cfg.nu0)
    if not math.isfinite(trajectory_cost(ctx, xi, bp0).total):
        raise InfeasibleStartError("initial trajectory has non-finite smoothed cost")
    T_prev = None
    K = None
    n_sub = None
    mu = 0.0
    for k in range(cfg.max_outer):
        bp = BarrierParams(cfg.eps0 * cfg.shrink**k, cfg.nu0 * cfg.shrink**k)
        K = _refresh_gain(ctx, xi, bp, cfg, K, n_sub0=n_sub)
        xi, recs, status, n_sub, mu = solve_inner(ctx, xi, bp, cfg, round_index=k,
                                                  K=K, n_sub0=n_sub, mu0=mu)
        report.iterations.extend(recs)
        cb = trajectory_cost(ctx, xi, bp)
        report.rounds.append(
            RoundRecord(
                round_index=k,
                epsilon=bp.epsilon,
                nu=bp.nu,
                iterations=len(recs),
                cost=cb.total,
                time_of_flight=cb.time_of_flight,
                max_constraint=cb.max_constraint,
                status=status,
            )
        )
        if (
            T_prev is not None
            and cb.max_constraint <= 1e-6
            and abs(T_prev - cb.time_of_flight) < 1e-4 * max(cb.time_of_flight, 1e-12)
        ):
            break
        T_prev = cb.time_of_flight
    # leave the result anchored at its own speed profile's rollout
    # resolution so re-projection with a fresh schedule reproduces it
    n_fin = substep_schedule(ctx, xi.q)
    if n_sub is None or not np.array_equal(n_fin, n_sub):
        polished, _, n_pol, _ = _candidate_cost(ctx, xi, K, xi.q[0], bp, n_sub=n_fin)
        if polished is not None:
            xi = polished
            n_sub = n_pol
            if report.rounds:
                cb = trajectory_cost(ctx, xi, bp)
                rr = report.rounds[-1]
                rr.cost = cb.total
                rr.time_of_flight = cb.time_of_flight
                rr.max_constraint = cb.max_constraint
    report.status = report.rounds[-1].status if report.rounds else "converged"
    report.gain = K
    report.schedule = n_sub
    return xi, report
