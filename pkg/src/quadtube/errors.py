"""Exception types raised across the library.

Every error that callers are expected to catch derives from QuadtubeError.
Numerical routines attach enough context (station index, offending value)
to make failures actionable from a driver script or the CLI.
"""


class QuadtubeError(Exception):
    """Base class for all library errors."""


class GimbalLockError(QuadtubeError):
    """Pitch magnitude too close to pi/2 for the Euler-rate map."""


class CurvatureError(QuadtubeError):
    """Path curvature below the floor where the moving frame is needed."""


class ProjectionError(QuadtubeError):
    """Closest-point Newton iteration failed to converge."""


class AmbiguousProjectionError(ProjectionError):
    """Two well-separated arc lengths nearly tie for the closest point."""


class TubeBoundaryError(QuadtubeError):
    """1 - k*w1 <= 0: the point left the tubular neighborhood."""

    def __init__(self, msg, station=None):
        super().__init__(msg)
        self.station = station


class SlowSpeedError(QuadtubeError):
    """Tangential speed below the floor where the space dynamics degenerate."""

    def __init__(self, msg, station=None):
        super().__init__(msg)
        self.station = station


class RiccatiError(QuadtubeError):
    """Backward Riccati sweep diverged (norm above 1e9)."""


class IndefiniteHessianError(QuadtubeError):
    """Full-Newton stage Hessian has a non-positive input block."""


class QuasiStaticError(QuadtubeError):
    """Initial-guess attitude would require tilt at or beyond pi/2."""


class ScenarioError(QuadtubeError):
    """Scenario geometry is inconsistent (tube too wide, ill-ordered bounds)."""


class InfeasibleStartError(QuadtubeError):
    """Initial trajectory has non-finite smoothed cost."""


class ConfigError(QuadtubeError):
    """Configuration document violates the schema.

    key_path is a dotted path such as "constraints.thrust.f_min".
    """

    def __init__(self, key_path, reason):
        super().__init__(f"{key_path}: {reason}")
        self.key_path = key_path
        self.reason = reason
