"""Arc-length parameterized reference paths and their moving frames.

A ReferencePath evaluates an analytic center line p(s) and its first three
arc-length derivatives with unit speed enforced to tight tolerance, from
which the tangent/normal/binormal frame, curvature k(s) and torsion tau(s)
follow:

    t = p'            k = ||p''||         n = p'' / k        b = t x n
    tau = det(p', p'', p''') / k^2
    R'(s) = R(s) @ [[0, -k, 0], [k, 0, -tau], [0, tau, 0]],  R = [t n b]

Curvature must stay above K_MIN everywhere: the normal direction is
undefined at inflections, so families are built to avoid them (heading
blends turn monotonically; straight lines carry a tiny superposed coil).

Supported families (make_analytic_path):
    circle          planar arc, unit-speed closed form
    helix           circular helix, unit-speed closed form
    atan_s_curve    p2 = a*atan(b*p1) over a u-range, numerically
                    reparameterized; ranges containing the inflection at
                    u = 0 are rejected by the curvature check
    straight        straight line with a superposed micro-coil of
                    amplitude*omega^2 curvature to stay above the floor
    atan_turn       planar curve defined by a monotone arctangent heading
                    profile; unit speed by construction, curvature > 0
    atan_turn_climb 3D extension with independent arctangent heading and
                    climb-angle blends
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import AmbiguousProjectionError, CurvatureError, ProjectionError

K_MIN = 1e-4

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass
class FrenetSample:
    """Frame data at one arc length."""

    s: float
    p: np.ndarray
    k: float
    tau: float
    R: np.ndarray  # columns t, n, b


class ReferencePath:
    """Unit-speed path wrapper over an analytic curve.

    The underlying curve supplies position and u-derivatives up to third
    order; self maps arc length s to u through adaptive quadrature of the
    speed plus a monotone cubic seed refined by Newton, then converts
    derivatives with the chain rule so unit speed holds analytically.
    """

    def __init__(self, curve, u0, u1, knots=2048, name="path"):
        self.curve = curve
        self.name = name
        self.u0 = float(u0)
        self.u1 = float(u1)
        n = max(int(knots), 2048)
        uk = np.linspace(u0, u1, n + 1)
        seg = np.empty(n)
        for i in range(n):
            seg[i] = self._speed_integral(uk[i], uk[i + 1])
        sk = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(sk[-1])
        self._uk = uk
        self._sk = sk
        self._u_of_s = PchipInterpolator(sk, uk)
        self.k_max, self.k_min_observed = self._curvature_extrema()
        if self.k_min_observed < K_MIN:
            raise CurvatureError(
                f"{name}: curvature drops to {self.k_min_observed:.3e} < {K_MIN:.0e}"
            )

    # -- arc length machinery -------------------------------------------------

    def _speed_integral(self, ua, ub):
        half = 0.5 * (ub - ua)
        mid = 0.5 * (ua + ub)
        us = mid + half * _GL_X
        v = self.curve.d1(us)
        return half * float(np.sum(_GL_W * np.linalg.norm(v, axis=-1)))

    def u_of_s(self, s):
        """Invert the arc-length map; Newton-polished, vectorized over s."""
        s = np.asarray(s, dtype=float)
        u = np.asarray(self._u_of_s(np.clip(s, 0.0, self.length)), dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u).copy()
        sv = np.atleast_1d(s)
        # arc length from nearest knot below, then Newton on sigma(u) - s
        idx = np.clip(np.searchsorted(self._sk, sv, side="right") - 1, 0, len(self._sk) - 1)
        for _ in range(4):
            resid = np.empty_like(u)
            for j in range(u.size):
                resid[j] = self._sk[idx[j]] + self._speed_integral(self._uk[idx[j]], u[j]) - sv[j]
            speed = np.linalg.norm(np.atleast_2d(self.curve.d1(u)), axis=-1)
            step = resid / speed
            u -= step
            if np.max(np.abs(step)) < 1e-13 * max(1.0, abs(self.u1 - self.u0)):
                break
        return u[0] if scalar else u

    # -- evaluation ------------------------------------------------------------

    def derivatives(self, s):
        """Position and first three s-derivatives at arc lengths s.

        Returns arrays (p, p1, p2, p3), each (..., 3). Unit speed is exact
        up to the quadrature tolerance: p1 = p_u / sigma'.
        """
        u = self.u_of_s(s)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        p = np.atleast_2d(self.curve.p(u))
        c1 = np.atleast_2d(self.curve.d1(u))
        c2 = np.atleast_2d(self.curve.d2(u))
        c3 = np.atleast_2d(self.curve.d3(u))
        sig1 = np.linalg.norm(c1, axis=-1)  # |p_u|
        sig2 = np.sum(c1 * c2, axis=-1) / sig1
        sig3 = (np.sum(c2 * c2, axis=-1) + np.sum(c1 * c3, axis=-1) - sig2 * sig2) / sig1
        up1 = 1.0 / sig1
        up2 = -sig2 / sig1**3
        up3 = -sig3 / sig1**4 + 3.0 * sig2**2 / sig1**5
        p1 = c1 * up1[:, None]
        p2 = c2 * (up1**2)[:, None] + c1 * up2[:, None]
        p3 = (
            c3 * (up1**3)[:, None]
            + 3.0 * c2 * (up1 * up2)[:, None]
            + c1 * up3[:, None]
        )
        if np.isscalar(s) or np.asarray(s).ndim == 0:
            return p[0], p1[0], p2[0], p3[0]
        return p, p1, p2, p3

    def position(self, s):
        u = self.u_of_s(s)
        return self.curve.p(np.atleast_1d(np.asarray(u, dtype=float)))[0] if np.ndim(s) == 0 else self.curve.p(u)

    def _curvature_extrema(self, samples=4096):
        s = np.linspace(0.0, self.length, samples)
        _, _, p2, _ = self.derivatives(s)
        k = np.linalg.norm(p2, axis=-1)
        return float(np.max(k)), float(np.min(k))


def frenet_at(path: ReferencePath, s) -> FrenetSample:
    """Frame, curvature, and torsion at arc length s.

    Raises:
        CurvatureError: if k(s) < K_MIN (normal undefined).
    """
    p, p1, p2, p3 = path.derivatives(float(s))
    k = float(np.linalg.norm(p2))
    if k < K_MIN:
        raise CurvatureError(f"curvature {k:.3e} below floor at s = {float(s):.6f}")
    t = p1
    n = p2 / k
    b = np.cross(t, n)
    tau = float(np.dot(np.cross(p1, p2), p3)) / k**2
    R = np.column_stack([t, n, b])
    return FrenetSample(s=float(s), p=p, k=k, tau=tau, R=R)


@dataclass
class FrameGrid:
    """Frenet data sampled on a fixed grid (solver hot-path cache).

    Holds stations and, when built with halves=True, the interval midpoints
    interleaved: grid index 2*i is station i, 2*i+1 the midpoint after it.
    All frame quantities are analytic evaluations, never interpolants.
    """

    s: np.ndarray
    p: np.ndarray
    k: np.ndarray
    tau: np.ndarray
    R: np.ndarray

    @classmethod
    def build(cls, path: ReferencePath, s_nodes: np.ndarray, halves: bool = True):
        s_nodes = np.asarray(s_nodes, dtype=float)
        if halves:
            mids = 0.5 * (s_nodes[:-1] + s_nodes[1:])
            s_all = np.empty(s_nodes.size + mids.size)
            s_all[0::2] = s_nodes
            s_all[1::2] = mids
        else:
            s_all = s_nodes
        p, p1, p2, p3 = path.derivatives(s_all)
        k = np.linalg.norm(p2, axis=-1)
        if np.min(k) < K_MIN:
            bad = float(s_all[int(np.argmin(k))])
            raise CurvatureError(f"curvature below floor at s = {bad:.6f}")
        n = p2 / k[:, None]
        b = np.cross(p1, n)
        tau = np.einsum("ij,ij->i", np.cross(p1, p2), p3) / k**2
        R = np.stack([p1, n, b], axis=-1)
        return cls(s=s_all, p=p, k=k, tau=tau, R=R)


def project_point(path: ReferencePath, point, s_hint=None):
    """Arc length of the closest point on the path.

    Newton iteration on the stationarity function
    g(s) = (point - p(s)) . p'(s), seeded either by a coarse scan with step
    <= 0.01 * length or by s_hint (tracking the local branch).

    Returns:
        (s, residual): minimizing arc length and |g(s)| there.

    Raises:
        ProjectionError: no convergence within 50 iterations.
        AmbiguousProjectionError: two sampled minima separated by more than
            1/k_max tie within 1e-6 (no hint given).
    """
    point = np.asarray(point, dtype=float)
    L = path.length
    if s_hint is None:
        m = max(120, int(math.ceil(100.0)))
        sg = np.linspace(0.0, L, m + 1)
        pg = path.derivatives(sg)[0]
        d2 = np.sum((pg - point) ** 2, axis=-1)
        order = np.argsort(d2)
        s0 = sg[order[0]]
        # ambiguity: a well-separated near-tie among sampled local minima
        best = d2[order[0]]
        sep = 1.0 / max(path.k_max, 1e-12)
        for j in order[1:]:
            if abs(sg[j] - s0) > sep and abs(d2[j] - best) < 1e-6:
                raise AmbiguousProjectionError(
                    f"closest point ambiguous near s = {s0:.4f} and s = {sg[j]:.4f}"
                )
            if abs(d2[j] - best) >= 1e-6:
                break
    else:
        s0 = float(np.clip(s_hint, 0.0, L))

    s = float(s0)
    for _ in range(50):
        p, p1, p2, _ = path.derivatives(s)
        dp = point - p
        g = float(np.dot(dp, p1))
        if abs(g) < 1e-10:
            return s, abs(g)
        dg = -1.0 + float(np.dot(dp, p2))
        if dg >= -1e-12:
            # non-contracting branch; bisect toward the coarse minimum
            dg = -1.0
        s_new = s - g / dg
        if s_new < 0.0 or s_new > L:
            s_new = min(max(s_new, 0.0), L)
            p, p1, _, _ = path.derivatives(s_new)
            gb = float(np.dot(point - p, p1))
            # boundary minimum: stationarity may not hold there
            if (s_new == 0.0 and gb <= 0.0) or (s_new == L and gb >= 0.0):
                return s_new, abs(gb)
        s = s_new
    raise ProjectionError(f"closest-point Newton failed to converge (last s = {s:.6f})")


# -- analytic curve families --------------------------------------------------


class _Circle:
    def __init__(self, radius):
        self.r = radius

    def p(self, u):
        u = np.atleast_1d(u)
        return np.stack([self.r * np.cos(u), self.r * np.sin(u), np.zeros_like(u)], axis=-1)

    def d1(self, u):
        u = np.atleast_1d(u)
        return np.stack([-self.r * np.sin(u), self.r * np.cos(u), np.zeros_like(u)], axis=-1)

    def d2(self, u):
        u = np.atleast_1d(u)
        return np.stack([-self.r * np.cos(u), -self.r * np.sin(u), np.zeros_like(u)], axis=-1)

    def d3(self, u):
        u = np.atleast_1d(u)
        return np.stack([self.r * np.sin(u), -self.r * np.cos(u), np.zeros_like(u)], axis=-1)


class _Helix:
    def __init__(self, radius, pitch):
        self.r = radius
        self.c = pitch

    def p(self, u):
        u = np.atleast_1d(u)
        return np.stack([self.r * np.cos(u), self.r * np.sin(u), self.c * u], axis=-1)

    def d1(self, u):
        u = np.atleast_1d(u)
        return np.stack([-self.r * np.sin(u), self.r * np.cos(u), np.full_like(u, self.c)], axis=-1)

    def d2(self, u):
        u = np.atleast_1d(u)
        return np.stack([-self.r * np.cos(u), -self.r * np.sin(u), np.zeros_like(u)], axis=-1)

    def d3(self, u):
        u = np.atleast_1d(u)
        return np.stack([self.r * np.sin(u), -self.r * np.cos(u), np.zeros_like(u)], axis=-1)


class _AtanSCurve:
    """p2 = a * atan(b * p1), graph parameterization."""

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def p(self, u):
        u = np.atleast_1d(u)
        return np.stack([u, self.a * np.arctan(self.b * u), np.zeros_like(u)], axis=-1)

    def d1(self, u):
        u = np.atleast_1d(u)
        z = self.b * u
        return np.stack([np.ones_like(u), self.a * self.b / (1 + z * z), np.zeros_like(u)], axis=-1)

    def d2(self, u):
        u = np.atleast_1d(u)
        z = self.b * u
        return np.stack(
            [np.zeros_like(u), -2 * self.a * self.b**2 * z / (1 + z * z) ** 2, np.zeros_like(u)],
            axis=-1,
        )

    def d3(self, u):
        u = np.atleast_1d(u)
        z = self.b * u
        den = (1 + z * z) ** 3
        return np.stack(
            [np.zeros_like(u), self.a * self.b**3 * (6 * z * z - 2) / den, np.zeros_like(u)],
            axis=-1,
        )


class _StraightCoil:
    """Straight line along x with a superposed micro-coil.

    The coil keeps ||p''|| = amplitude * omega^2 bounded away from zero so
    the frame stays defined; amplitude is millimeters in practice.
    """

    def __init__(self, direction_scale=1.0, amplitude=2e-3, omega=1.0):
        self.a = amplitude
        self.w = omega

    def p(self, u):
        u = np.atleast_1d(u)
        return np.stack([u, self.a * np.cos(self.w * u), self.a * np.sin(self.w * u)], axis=-1)

    def d1(self, u):
        u = np.atleast_1d(u)
        return np.stack(
            [np.ones_like(u), -self.a * self.w * np.sin(self.w * u), self.a * self.w * np.cos(self.w * u)],
            axis=-1,
        )

    def d2(self, u):
        u = np.atleast_1d(u)
        w2 = self.w**2
        return np.stack(
            [np.zeros_like(u), -self.a * w2 * np.cos(self.w * u), -self.a * w2 * np.sin(self.w * u)],
            axis=-1,
        )

    def d3(self, u):
        u = np.atleast_1d(u)
        w3 = self.w**3
        return np.stack(
            [np.zeros_like(u), self.a * w3 * np.sin(self.w * u), -self.a * w3 * np.cos(self.w * u)],
            axis=-1,
        )


class _HeadingBlend:
    """Curve defined by heading/climb angle profiles; unit speed in u.

    p'(u) = [cos(chi) cos(gam), sin(chi) cos(gam), -sin(gam)] with
    chi(u) = sum of A * atan(b (u - u0)) terms (zeroed at u = 0) and gam(u)
    likewise. Position comes from per-knot Gauss quadrature; derivatives are
    closed-form. Curvature sqrt(gam'^2 + chi'^2 cos^2 gam) never vanishes
    when the blend tails overlap.
    """

    def __init__(self, heading_terms, climb_terms, u_max, knots=4096):
        self.ht = [(float(A), float(b), float(u0)) for A, b, u0 in heading_terms]
        self.ct = [(float(A), float(b), float(u0)) for A, b, u0 in climb_terms]
        self._chi0 = self._angle_raw(np.array([0.0]), self.ht)[0]
        self._gam0 = self._angle_raw(np.array([0.0]), self.ct)[0]
        n = max(int(knots), 1024)
        self._uk = np.linspace(0.0, float(u_max), n + 1)
        pk = np.zeros((n + 1, 3))
        for i in range(n):
            pk[i + 1] = pk[i] + self._pos_integral(self._uk[i], self._uk[i + 1])
        self._pk = pk

    @staticmethod
    def _angle_raw(u, terms):
        out = np.zeros_like(u)
        for A, b, u0 in terms:
            out = out + A * np.arctan(b * (u - u0))
        return out

    def _angles(self, u):
        chi = self._angle_raw(u, self.ht) - self._chi0
        gam = self._angle_raw(u, self.ct) - self._gam0
        return chi, gam

    def _angle_d(self, u, terms, order):
        out = np.zeros_like(u)
        for A, b, u0 in terms:
            z = b * (u - u0)
            if order == 1:
                out = out + A * b / (1 + z * z)
            elif order == 2:
                out = out + A * b**2 * (-2 * z) / (1 + z * z) ** 2
            else:
                out = out + A * b**3 * (6 * z * z - 2) / (1 + z * z) ** 3
        return out

    def _tangent(self, u):
        chi, gam = self._angles(u)
        cg = np.cos(gam)
        return np.stack([np.cos(chi) * cg, np.sin(chi) * cg, -np.sin(gam)], axis=-1)

    def _pos_integral(self, ua, ub):
        half = 0.5 * (ub - ua)
        mid = 0.5 * (ua + ub)
        us = mid + half * _GL_X
        t = self._tangent(us)
        return half * np.sum(_GL_W[:, None] * t, axis=0)

    def p(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        idx = np.clip(np.searchsorted(self._uk, u, side="right") - 1, 0, len(self._uk) - 2)
        out = np.empty((u.size, 3))
        for j in range(u.size):
            out[j] = self._pk[idx[j]] + self._pos_integral(self._uk[idx[j]], u[j])
        return out

    def d1(self, u):
        return self._tangent(np.atleast_1d(np.asarray(u, dtype=float)))

    def d2(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        chi, gam = self._angles(u)
        c1 = self._angle_d(u, self.ht, 1)
        g1 = self._angle_d(u, self.ct, 1)
        cc, sc = np.cos(chi), np.sin(chi)
        cg, sg = np.cos(gam), np.sin(gam)
        return np.stack(
            [
                -sc * c1 * cg - cc * sg * g1,
                cc * c1 * cg - sc * sg * g1,
                -cg * g1,
            ],
            axis=-1,
        )

    def d3(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        chi, gam = self._angles(u)
        c1 = self._angle_d(u, self.ht, 1)
        c2 = self._angle_d(u, self.ht, 2)
        g1 = self._angle_d(u, self.ct, 1)
        g2 = self._angle_d(u, self.ct, 2)
        cc, sc = np.cos(chi), np.sin(chi)
        cg, sg = np.cos(gam), np.sin(gam)
        x3 = (
            -cc * c1 * c1 * cg
            - sc * c2 * cg
            + sc * c1 * sg * g1
            + sc * c1 * sg * g1
            - cc * cg * g1 * g1
            - cc * sg * g2
        )
        y3 = (
            -sc * c1 * c1 * cg
            + cc * c2 * cg
            - cc * c1 * sg * g1
            - cc * c1 * sg * g1
            - sc * cg * g1 * g1
            - sc * sg * g2
        )
        z3 = sg * g1 * g1 - cg * g2
        return np.stack([x3, y3, z3], axis=-1)


def make_analytic_path(spec: dict) -> ReferencePath:
    """Build a ReferencePath from a family spec dictionary.

    Raises:
        CurvatureError: curvature falls below K_MIN somewhere on the path.
        ValueError: unknown family or malformed parameters.
    """
    spec = dict(spec)
    family = spec.pop("family", None)
    if family == "circle":
        r = float(spec["radius"])
        span = float(spec.get("angle", 2 * math.pi))
        return ReferencePath(_Circle(r), 0.0, span, name="circle")
    if family == "helix":
        r = float(spec["radius"])
        c = float(spec["pitch"])
        turns = float(spec.get("turns", 1.0))
        return ReferencePath(_Helix(r, c), 0.0, 2 * math.pi * turns, name="helix")
    if family == "atan_s_curve":
        a, b = float(spec["a"]), float(spec["b"])
        u0, u1 = (float(v) for v in spec["u_range"])
        return ReferencePath(_AtanSCurve(a, b), u0, u1, name="atan_s_curve")
    if family == "straight":
        length = float(spec["length"])
        amp = float(spec.get("amplitude", 2e-3))
        omega = float(spec.get("omega", 1.0))
        return ReferencePath(_StraightCoil(1.0, amp, omega), 0.0, length, name="straight")
    if family == "atan_turn":
        terms = [tuple(t) for t in spec["heading_terms"]]
        length = float(spec["length"])
        return ReferencePath(
            _HeadingBlend(terms, [], length * 1.02), 0.0, length, name="atan_turn"
        )
    if family == "atan_turn_climb":
        ht = [tuple(t) for t in spec["heading_terms"]]
        ct = [tuple(t) for t in spec["climb_terms"]]
        length = float(spec["length"])
        return ReferencePath(
            _HeadingBlend(ht, ct, length * 1.02), 0.0, length, name="atan_turn_climb"
        )
    raise ValueError(f"unknown path family: {family!r}")
