"""Space/time formulation equivalence check.

Takes a solved space-domain trajectory, re-integrates it open loop on a
refined grid, reconstructs the time axis t(s) and the time-domain input
signal u(t), then integrates the original timed dynamics. If the
reformulation is exact, both descriptions land at the same terminal
position and the quadrature time of flight matches the reconstructed
duration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import FrameGrid
from .quadrotor import integrate_time
from .transverse import (
    from_transverse,
    integrate_space,
    invert_time_map,
    reconstruct_time_map,
    time_of_flight,
)


@dataclass
class EquivalenceReport:
    grid: int
    position_error: float  # |p_time(T) - p_space(L)| [m]
    duration: float  # reconstructed t(L) [s]
    time_of_flight: float  # trapezoid quadrature of (1 - k w1)/vt [s]
    duration_gap_rel: float

    def passed(self, pos_tol=1e-3, dur_tol=1e-4) -> bool:
        return self.position_error < pos_tol and self.duration_gap_rel < dur_tol


def time_domain_check(ctx, traj, refine: int = 2, steps_per_station: int = 4) -> EquivalenceReport:
    """Run the equivalence check on a refined grid (default N -> 2N).

    The trajectory's piecewise-linear inputs are resampled onto the fine
    grid, rolled out open loop in the space domain, mapped to a time-domain
    input history, and integrated with the timed dynamics from the matching
    initial state.
    """
    n2 = refine * ctx.N
    s2 = np.linspace(0.0, ctx.path.length, n2 + 1)
    frames2 = FrameGrid.build(ctx.path, s2, halves=True)
    u2 = np.column_stack([np.interp(s2, traj.s, traj.u[:, j]) for j in range(4)])
    q2 = integrate_space(frames2, traj.q[0], u2, ctx.mass, ctx.gravity)
    t_nodes, phi_nodes = reconstruct_time_map(frames2, q2)
    duration = float(t_nodes[-1])
    T_quad = time_of_flight(s2, q2, frames2.k[0::2])

    x0 = from_transverse(ctx.path, 0.0, q2[0])
    x_end = from_transverse(ctx.path, float(s2[-1]), q2[-1])

    def u_of_t(t):
        sq = invert_time_map(s2, t_nodes, phi_nodes, t)
        return np.array([np.interp(sq, s2, u2[:, j]) for j in range(4)])

    t_grid = np.linspace(0.0, duration, steps_per_station * n2 + 1)
    x_final = integrate_time(x0, u_of_t, t_grid, ctx.mass, ctx.gravity)
    pos_err = float(np.linalg.norm(x_final[0:3] - x_end[0:3]))
    return EquivalenceReport(
        grid=n2,
        position_error=pos_err,
        duration=duration,
        time_of_flight=T_quad,
        duration_gap_rel=abs(T_quad - duration) / max(duration, 1e-12),
    )
