"""Benchmark scenario constructors and the quasi-static initial trajectory.

Two stock scenarios:

* tube: a 3D center line built from arctangent heading/climb blends inside a
  circular tube whose radius narrows smoothly from 0.5 m to 0.2 m. Pure
  minimum-time problem, no terminal target.
* corridor: a planar arctangent turn through a 0.5 m x 0.5 m corridor
  window, then an obstacle step in the w2 ceiling that forces the vehicle to
  finish at least 1 m above the path plane (inertial z points down, so
  negative w2 is up). Terminal target q_d = [0, -1.5, 0, 0, 0, 0, 0, 0] with
  a quadratic penalty; the straight initial curve is infeasible on purpose.

All numeric defaults here are reconstructions; they are documented in the
README rather than measured from any source data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    CircularTube,
    ConstraintSet,
    RectangularCorridor,
    TerminalTarget,
    atan_pulse,
    atan_ramp,
    atan_step,
    constant_profile,
    sum_profile,
)
from .errors import QuasiStaticError, ScenarioError
from .paths import ReferencePath, frenet_at, make_analytic_path
from .quadrotor import euler_rate_jacobian_inv
from .solver import SolveContext, SolverConfig, TrajectoryCurve, linearize, lqr_gain, project
from .transverse import PHI, THETA, V_FLOOR, VT

QS_TILT_MARGIN = 0.1  # rad below pi/2 at which quasi-static attitude gives up


@dataclass
class QuadParams:
    mass: float
    gravity: float = 9.81

    def __post_init__(self):
        if self.mass <= 0:
            raise ScenarioError(f"mass must be positive, got {self.mass}")


@dataclass
class Scenario:
    name: str
    path: ReferencePath
    constraints: ConstraintSet
    q0: np.ndarray
    target: TerminalTarget | None
    params: QuadParams
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float)
        if self.q0.shape != (8,):
            raise ScenarioError("q0 must have 8 components")
        if self.q0[VT] <= V_FLOOR:
            raise ScenarioError(f"q0 tangential speed {self.q0[VT]} at or below floor {V_FLOOR}")
        k0 = frenet_at(self.path, 0.0).k
        if 1.0 - k0 * self.q0[0] <= 0.0:
            raise ScenarioError("q0 outside the tubular neighborhood at s = 0")

    def context(self, N=None) -> SolveContext:
        return SolveContext.for_scenario(self, N)


def quasi_static_attitude(k_val, n_vec, v, mass, gravity):
    """Attitude/thrust balancing gravity plus centripetal pull at speed v.

    The thrust direction R(Phi) e3 must align with G = g e3 - v^2 k n; with
    psi = 0 that fixes phi = -asin(G_y/|G|), theta = atan2(G_x, G_z).
    Returns (phi, theta, f).

    Raises:
        QuasiStaticError: thrust direction undefined or tilt too close to
            the pitch singularity.
    """
    G = np.array([0.0, 0.0, gravity]) - v * v * k_val * np.asarray(n_vec, dtype=float)
    Gn = float(np.linalg.norm(G))
    if Gn < 1e-9:
        raise QuasiStaticError("free-fall balance: required thrust vanishes")
    Ghat = G / Gn
    tilt = math.acos(min(1.0, max(-1.0, Ghat[2])))
    if tilt >= 0.5 * math.pi - QS_TILT_MARGIN:
        raise QuasiStaticError(
            f"quasi-static tilt {tilt:.3f} rad within margin of the attitude singularity"
        )
    phi = -math.asin(min(1.0, max(-1.0, Ghat[1])))
    theta = math.atan2(Ghat[0], Ghat[2])
    return phi, theta, mass * Gn


def quasi_static_q0(path, v_init, mass, gravity):
    fr = frenet_at(path, 0.0)
    phi, theta, _ = quasi_static_attitude(fr.k, fr.R[:, 1], v_init, mass, gravity)
    q0 = np.zeros(8)
    q0[VT] = v_init
    q0[PHI] = phi
    q0[THETA] = theta
    return q0


def _check_tube_radius(path, r_obs, samples=2048):
    s = np.linspace(0.0, path.length, samples)
    _, _, p2, _ = path.derivatives(s)
    k = np.linalg.norm(p2, axis=-1)
    prod = np.asarray(r_obs(s), dtype=float) * k
    i = int(np.argmax(prod))
    if prod[i] >= 1.0:
        raise ScenarioError(
            f"tube radius {float(np.asarray(r_obs(s[i]))):.4f} reaches the reciprocal "
            f"curvature 1/k = {1.0 / k[i]:.4f} at s = {s[i]:.3f}"
        )


def build_tube_scenario(
    length=13.0,
    heading=((0.35, 1.2, 4.0),),
    climb=((0.22, 1.0, 8.5),),
    r_start=0.5,
    r_end=0.2,
    ramp_center=8.0,
    ramp_sharpness=0.7,
    omega_max=(10.0, 10.0, 4.0),
    f_min=0.03,
    f_max=0.45,
    phi_max=1.2,
    theta_max=1.2,
    mass=0.021,
    gravity=9.81,
    v_init=1.0,
    solver: SolverConfig | None = None,
) -> Scenario:
    """Narrowing-tube minimum-time scenario (no terminal target).

    Raises:
        ScenarioError: the tube radius reaches 1/k somewhere (projection
            would be ambiguous inside the tube), or bound data is invalid.
    """
    if r_start <= 0 or r_end <= 0:
        raise ScenarioError("tube radii must be positive")
    path = make_analytic_path(
        {
            "family": "atan_turn_climb",
            "length": length,
            "heading_terms": [tuple(t) for t in heading],
            "climb_terms": [tuple(t) for t in climb],
        }
    )
    r_obs = atan_ramp(r_start, r_end, ramp_center, ramp_sharpness, 0.0, length)
    _check_tube_radius(path, r_obs)
    cs = ConstraintSet(
        omega_max=np.asarray(omega_max, dtype=float),
        f_min=f_min,
        f_max=f_max,
        phi_max=constant_profile(phi_max),
        theta_max=constant_profile(theta_max),
        obstacle=CircularTube(r_obs),
    )
    params = QuadParams(mass, gravity)
    q0 = quasi_static_q0(path, v_init, mass, gravity)
    # narrow relaxation band: the minimum-time optimum rides the thrust and
    # tube walls hard, and the final margin scales with nu, so a wide band
    # would leave the last round fractionally outside the boundary
    cfg = solver or SolverConfig(nu0=0.01)
    return Scenario("tube", path, cs, q0, None, params, cfg)


def build_corridor_scenario(
    length=9.0,
    heading=((0.2, 1.2, 3.0),),
    corridor=(4.2, 6.2),
    half_width=0.25,
    wide_half_width=2.0,
    w2_floor=-2.5,
    obstacle_at=6.9,
    obstacle_height=1.0,
    edge_sharpness=6.0,
    omega_max=(10.0, 10.0, 4.0),
    f_min=0.03,
    f_max=0.45,
    phi_max=1.2,
    theta_max=1.2,
    mass=0.021,
    gravity=9.81,
    rho=1e3,
    v_init=1.0,
    obstacle_enabled=True,
    solver: SolverConfig | None = None,
) -> Scenario:
    """Planar-turn corridor scenario with an obstacle step and terminal pull.

    The corridor segment narrows both w bounds to +-half_width. After
    obstacle_at, the w2 ceiling steps down to about -obstacle_height, so the
    vehicle must finish above the path plane; the target pulls it to
    w2 = -1.5 at rest-like attitude.

    Raises:
        ScenarioError: ill-ordered corridor profiles.
    """
    on, off = corridor
    if not (0.0 < on < off < length):
        raise ScenarioError(f"corridor window [{on}, {off}] outside the path span")
    if not (0.0 < half_width < wide_half_width):
        raise ScenarioError("corridor half widths ill-ordered")
    path = make_analytic_path(
        {
            "family": "atan_turn",
            "length": length,
            "heading_terms": [tuple(t) for t in heading],
        }
    )
    squeeze = wide_half_width - half_width
    w1_min = sum_profile(-wide_half_width, [atan_pulse(on, off, squeeze, edge_sharpness)])
    w1_max = sum_profile(wide_half_width, [atan_pulse(on, off, -squeeze, edge_sharpness)])
    w2_min = sum_profile(w2_floor, [atan_pulse(on, off, -half_width - w2_floor, edge_sharpness)])
    w2_terms = [atan_pulse(on, off, -squeeze, edge_sharpness)]
    if obstacle_enabled:
        w2_terms.append(
            atan_step(obstacle_at, -(wide_half_width + obstacle_height), edge_sharpness)
        )
    w2_max = sum_profile(wide_half_width, w2_terms)
    obstacle = RectangularCorridor(w1_min, w1_max, w2_min, w2_max)
    cs = ConstraintSet(
        omega_max=np.asarray(omega_max, dtype=float),
        f_min=f_min,
        f_max=f_max,
        phi_max=constant_profile(phi_max),
        theta_max=constant_profile(theta_max),
        obstacle=obstacle,
    )
    # fail fast on ill-ordered profiles, same check the solver grid would hit
    from .constraints import BoundTable

    BoundTable.build(cs, np.linspace(0.0, length, 2048))
    params = QuadParams(mass, gravity)
    q0 = quasi_static_q0(path, v_init, mass, gravity)
    target = TerminalTarget(np.array([0.0, -1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), rho=rho)
    return Scenario("corridor", path, cs, q0, target, params, solver or SolverConfig())


def initial_trajectory(scn: Scenario, v_init=None, ctx: SolveContext | None = None,
                       cfg: SolverConfig | None = None) -> TrajectoryCurve:
    """Quasi-static curve along the path center, then projected.

    w = 0, v_SF = (v_init, 0, 0), psi = 0; phi, theta, f balance gravity and
    the centripetal pull at each station; omega comes from finite
    differences of the attitude over s scaled by sdot = v_init. The
    projection operator turns the curve into a true trajectory.

    Raises:
        QuasiStaticError: required tilt too large somewhere on the path.
    """
    cfg = cfg or scn.solver
    ctx = ctx or SolveContext.for_scenario(scn, cfg.N)
    v = float(scn.q0[VT] if v_init is None else v_init)
    if v <= V_FLOOR:
        raise ScenarioError(f"v_init {v} at or below the speed floor {V_FLOOR}")
    s = ctx.s
    n = s.size
    k = ctx.frames.k[0::2]
    nvec = ctx.frames.R[0::2, :, 1]
    q = np.zeros((n, 8))
    u = np.empty((n, 4))
    Phi = np.zeros((n, 3))
    for i in range(n):
        phi, theta, f = quasi_static_attitude(k[i], nvec[i], v, ctx.mass, ctx.gravity)
        Phi[i, 0] = phi
        Phi[i, 1] = theta
        u[i, 3] = f
    q[:, VT] = v
    q[:, PHI] = Phi[:, 0]
    q[:, THETA] = Phi[:, 1]
    dPhi = np.gradient(Phi, s, axis=0)
    for i in range(n):
        u[i, 0:3] = euler_rate_jacobian_inv(Phi[i]) @ (dPhi[i] * v)
    curve = TrajectoryCurve(s, q, u)
    lin = linearize(ctx, curve)
    K = lqr_gain(ctx, lin, cfg.qr_matrix(), cfg.rr_matrix())
    return project(ctx, curve, K, curve.q[0])
