"""State/input constraints, the relaxed log barrier, and the terminal penalty.

Every constraint is written as a normalized squared form c_j <= 0 with
c_j = (y / y_max)^2 - 1 (symmetric bound) or its two-sided variant
c_j = ((2 y - (hi + lo)) / (hi - lo))^2 - 1, so c_j = -1 at the center and
0 exactly on the boundary. Ordering, circular tube:

    0..2  body-rate bounds      (omega_i / omega_max_i)^2 - 1
    3     thrust bound          ((2 f - (fmax + fmin)) / (fmax - fmin))^2 - 1
    4     roll bound            (phi / phi_max(s))^2 - 1
    5     pitch bound           (theta / theta_max(s))^2 - 1
    6     tube cross-section    (w1^2 + w2^2) / r_obs(s)^2 - 1

A rectangular corridor replaces entry 6 with two entries (w1 box, w2 box),
eight constraints total.

The relaxed barrier beta_nu is -log(x) above nu and its C^1 quadratic
extension -log(nu) + 0.5*(((x - 2 nu)/nu)^2 - 1) at or below, defined on
all of R and strictly decreasing, so infeasible curves still carry finite
smoothed cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ScenarioError
from .transverse import F, OM1, OM2, OM3, PHI, THETA, V_FLOOR, VT, W1, W2

Profile = Callable[[np.ndarray], np.ndarray]


def constant_profile(value: float) -> Profile:
    v = float(value)

    def f(s):
        return np.full_like(np.asarray(s, dtype=float), v)

    return f


def atan_step(at: float, amplitude: float, sharpness: float) -> Profile:
    """Smoothed step: 0 far before `at`, `amplitude` far after."""

    def f(s):
        s = np.asarray(s, dtype=float)
        return amplitude * (np.arctan(sharpness * (s - at)) / math.pi + 0.5)

    return f


def atan_pulse(on: float, off: float, amplitude: float, sharpness: float) -> Profile:
    """Smoothed rectangular pulse between on and off."""
    up = atan_step(on, amplitude, sharpness)
    down = atan_step(off, amplitude, sharpness)

    def f(s):
        return up(s) - down(s)

    return f


def sum_profile(base: float, terms: Sequence[Profile]) -> Profile:
    def f(s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, float(base))
        for t in terms:
            out = out + t(s)
        return out

    return f


def atan_ramp(start_value: float, end_value: float, center: float, sharpness: float,
              s0: float, s1: float) -> Profile:
    """Monotone smoothed ramp normalized to hit the end values exactly at s0, s1."""
    a0 = math.atan(sharpness * (s0 - center))
    a1 = math.atan(sharpness * (s1 - center))

    def f(s):
        s = np.asarray(s, dtype=float)
        w = (np.arctan(sharpness * (s - center)) - a0) / (a1 - a0)
        return start_value + (end_value - start_value) * w

    return f


@dataclass
class CircularTube:
    """Position constraint ||w|| <= r_obs(s)."""

    r_obs: Profile

    def names(self):
        return ["c_pos"]


@dataclass
class RectangularCorridor:
    """Position constraints w1 in [w1_min, w1_max](s), w2 in [w2_min, w2_max](s)."""

    w1_min: Profile
    w1_max: Profile
    w2_min: Profile
    w2_max: Profile

    def names(self):
        return ["c_pos_w1", "c_pos_w2"]


@dataclass
class ConstraintSet:
    """Bound data for one scenario.

    omega_max: three body-rate bounds [rad/s].
    f_min, f_max: thrust bounds [N], f_min < f_max.
    phi_max, theta_max: angle bound profiles [rad] (callables of s).
    obstacle: CircularTube or RectangularCorridor.
    """

    omega_max: np.ndarray
    f_min: float
    f_max: float
    phi_max: Profile
    theta_max: Profile
    obstacle: CircularTube | RectangularCorridor

    def __post_init__(self):
        self.omega_max = np.asarray(self.omega_max, dtype=float)
        if self.omega_max.shape != (3,) or np.any(self.omega_max <= 0):
            raise ScenarioError("omega_max must be three positive rates")
        if not self.f_min < self.f_max:
            raise ScenarioError(f"thrust bounds ill-ordered: [{self.f_min}, {self.f_max}]")

    @property
    def count(self) -> int:
        return 6 + len(self.obstacle.names())

    def names(self):
        return ["c_omega1", "c_omega2", "c_omega3", "c_thrust", "c_roll", "c_pitch"] + list(
            self.obstacle.names()
        )


@dataclass
class BoundTable:
    """Profiles evaluated on a fixed s grid (solver cache)."""

    phi_max: np.ndarray
    theta_max: np.ndarray
    pos: tuple  # circular: (r_obs,); rectangular: (w1_min, w1_max, w2_min, w2_max)
    rectangular: bool

    @classmethod
    def build(cls, cs: ConstraintSet, s: np.ndarray):
        s = np.asarray(s, dtype=float)
        ob = cs.obstacle
        if isinstance(ob, CircularTube):
            pos = (np.asarray(ob.r_obs(s), dtype=float),)
            rect = False
            if np.any(pos[0] <= 0):
                raise ScenarioError("r_obs must stay positive")
        else:
            lo1 = np.asarray(ob.w1_min(s), dtype=float)
            hi1 = np.asarray(ob.w1_max(s), dtype=float)
            lo2 = np.asarray(ob.w2_min(s), dtype=float)
            hi2 = np.asarray(ob.w2_max(s), dtype=float)
            if np.any(lo1 >= hi1) or np.any(lo2 >= hi2):
                bad = float(s[np.argmax((lo1 >= hi1) | (lo2 >= hi2))])
                raise ScenarioError(f"corridor bounds ill-ordered near s = {bad:.3f}")
            pos = (lo1, hi1, lo2, hi2)
            rect = True
        return cls(
            phi_max=np.asarray(cs.phi_max(s), dtype=float),
            theta_max=np.asarray(cs.theta_max(s), dtype=float),
            pos=pos,
            rectangular=rect,
        )

    def at(self, i: int):
        """Bound values at grid index i, unpacked for the evaluators."""
        if self.rectangular:
            return (
                self.phi_max[i],
                self.theta_max[i],
                (self.pos[0][i], self.pos[1][i], self.pos[2][i], self.pos[3][i]),
            )
        return self.phi_max[i], self.theta_max[i], (self.pos[0][i],)


def _two_sided(y, lo, hi):
    return ((2.0 * y - (hi + lo)) / (hi - lo)) ** 2 - 1.0


def eval_constraints(cs: ConstraintSet, q, u, phi_max, theta_max, pos_bounds):
    """Constraint values c_j(q, u) at one station, bounds already evaluated."""
    out = np.empty(cs.count)
    out[0:3] = (u[0:3] / cs.omega_max) ** 2 - 1.0
    out[3] = _two_sided(u[F], cs.f_min, cs.f_max)
    out[4] = (q[PHI] / phi_max) ** 2 - 1.0
    out[5] = (q[THETA] / theta_max) ** 2 - 1.0
    if len(pos_bounds) == 1:
        out[6] = (q[W1] ** 2 + q[W2] ** 2) / pos_bounds[0] ** 2 - 1.0
    else:
        lo1, hi1, lo2, hi2 = pos_bounds
        out[6] = _two_sided(q[W1], lo1, hi1)
        out[7] = _two_sided(q[W2], lo2, hi2)
    return out


def constraint_jacobian(cs: ConstraintSet, q, u, phi_max, theta_max, pos_bounds):
    """Gradients dc_j/d(q, u) stacked as (count, 12); z = (q, u)."""
    G = np.zeros((cs.count, 12))
    G[0, 8 + OM1] = 2.0 * u[OM1] / cs.omega_max[0] ** 2
    G[1, 8 + OM2] = 2.0 * u[OM2] / cs.omega_max[1] ** 2
    G[2, 8 + OM3] = 2.0 * u[OM3] / cs.omega_max[2] ** 2
    df = cs.f_max - cs.f_min
    G[3, 8 + F] = 4.0 * (2.0 * u[F] - (cs.f_max + cs.f_min)) / df**2
    G[4, PHI] = 2.0 * q[PHI] / phi_max**2
    G[5, THETA] = 2.0 * q[THETA] / theta_max**2
    if len(pos_bounds) == 1:
        r2 = pos_bounds[0] ** 2
        G[6, W1] = 2.0 * q[W1] / r2
        G[6, W2] = 2.0 * q[W2] / r2
    else:
        lo1, hi1, lo2, hi2 = pos_bounds
        G[6, W1] = 4.0 * (2.0 * q[W1] - (hi1 + lo1)) / (hi1 - lo1) ** 2
        G[7, W2] = 4.0 * (2.0 * q[W2] - (hi2 + lo2)) / (hi2 - lo2) ** 2
    return G


def constraint_hessian_diag(cs: ConstraintSet, phi_max, theta_max, pos_bounds, rectangular):
    """Constant Hessian diagonals d2c_j/dz^2 (the forms are quadratic).

    Returns (count, 12); the circular tube contributes 2/r^2 on both w slots
    of its single row.
    """
    H = np.zeros((cs.count, 12))
    H[0, 8 + OM1] = 2.0 / cs.omega_max[0] ** 2
    H[1, 8 + OM2] = 2.0 / cs.omega_max[1] ** 2
    H[2, 8 + OM3] = 2.0 / cs.omega_max[2] ** 2
    H[3, 8 + F] = 8.0 / (cs.f_max - cs.f_min) ** 2
    H[4, PHI] = 2.0 / phi_max**2
    H[5, THETA] = 2.0 / theta_max**2
    if not rectangular:
        r2 = pos_bounds[0] ** 2
        H[6, W1] = 2.0 / r2
        H[6, W2] = 2.0 / r2
    else:
        lo1, hi1, lo2, hi2 = pos_bounds
        H[6, W1] = 8.0 / (hi1 - lo1) ** 2
        H[7, W2] = 8.0 / (hi2 - lo2) ** 2
    return H


def beta_nu(x, nu):
    """Relaxed log barrier: -log x for x > nu, quadratic extension below."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    hi = x > nu
    out[hi] = -np.log(x[hi])
    xl = x[~hi]
    out[~hi] = -math.log(nu) + 0.5 * (((xl - 2.0 * nu) / nu) ** 2 - 1.0)
    return out if out.ndim else float(out)


def beta_nu_d1(x, nu):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    hi = x > nu
    out[hi] = -1.0 / x[hi]
    out[~hi] = (x[~hi] - 2.0 * nu) / nu**2
    return out if out.ndim else float(out)


def beta_nu_d2(x, nu):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    hi = x > nu
    out[hi] = 1.0 / x[hi] ** 2
    out[~hi] = 1.0 / nu**2
    return out if out.ndim else float(out)


@dataclass
class BarrierParams:
    epsilon: float
    nu: float


@dataclass
class TerminalTarget:
    """Quadratic pull toward a desired final transverse state.

    q_d is the configured target and is what reports measure against.
    The penalty itself tracks q_track, which clamps the tangential-speed
    component away from the arc-length model's hard floor: a target speed
    at or below the floor would pull iterates onto the domain boundary,
    where the rollout guard fires on roundoff-level perturbations.
    """

    q_d: np.ndarray
    rho: float = 1e3

    def __post_init__(self):
        self.q_d = np.asarray(self.q_d, dtype=float)
        if self.q_d.shape != (8,):
            raise ScenarioError("target state must have 8 components")
        self.q_track = self.q_d.copy()
        self.q_track[VT] = max(self.q_track[VT], 4.0 * V_FLOOR)


def terminal_penalty(target: TerminalTarget | None, q_end: np.ndarray) -> float:
    if target is None:
        return 0.0
    d = target.q_track - q_end
    return 0.5 * target.rho * float(d @ d)


def terminal_penalty_grad(target: TerminalTarget | None, q_end: np.ndarray) -> np.ndarray:
    if target is None:
        return np.zeros(8)
    return target.rho * (q_end - target.q_track)
