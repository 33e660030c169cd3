"""Minimum-time quadrotor trajectories through tubes and corridors.

The library reformulates the timed flat-out problem over the arc length of
a reference path: the state holds transverse offsets, frame-aligned
velocity, and attitude; time of flight becomes the integral of
(1 - k w1)/vt. A projection-operator Newton method with a relaxed log
barrier and (eps, nu) continuation solves the constrained problem.
"""

from .constraints import (
    BarrierParams,
    BoundTable,
    CircularTube,
    ConstraintSet,
    RectangularCorridor,
    TerminalTarget,
    atan_pulse,
    atan_ramp,
    atan_step,
    beta_nu,
    beta_nu_d1,
    beta_nu_d2,
    constant_profile,
    eval_constraints,
    sum_profile,
    terminal_penalty,
)
from .errors import (
    AmbiguousProjectionError,
    ConfigError,
    CurvatureError,
    GimbalLockError,
    IndefiniteHessianError,
    InfeasibleStartError,
    ProjectionError,
    QuadtubeError,
    QuasiStaticError,
    RiccatiError,
    ScenarioError,
    SlowSpeedError,
    TubeBoundaryError,
)
from .paths import (
    FrameGrid,
    FrenetSample,
    ReferencePath,
    frenet_at,
    make_analytic_path,
    project_point,
)
from .quadrotor import integrate_time, rotation_rpy, time_dynamics
from .scenarios import (
    QuadParams,
    Scenario,
    build_corridor_scenario,
    build_tube_scenario,
    initial_trajectory,
    quasi_static_attitude,
)
from .solver import (
    IterationRecord,
    LinearizedSystem,
    Report,
    RoundRecord,
    SolveContext,
    SolverConfig,
    TrajectoryCurve,
    barrier_cost,
    line_search,
    linearize,
    lqr_gain,
    newton_direction,
    project,
    projected_cost_gradient,
    projection_defect,
    solve_continuation,
    solve_inner,
    substep_schedule,
    trajectory_cost,
)
from .transverse import (
    V_FLOOR,
    from_transverse,
    integrate_space,
    invert_time_map,
    reconstruct_time_map,
    s_rate,
    space_rhs,
    time_of_flight,
    time_rhs,
    to_transverse,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
