"""Command line interface: config parsing, scenario runs, artifact emission.

Subcommands:

* solve <config> --out DIR    run the continuation solver, write artifacts
* validate <config>           parse and construct the scenario, report, exit
* oracle <config>             solve, then run the space/time equivalence check

Exit codes: 0 solved/valid, 2 solver stalled (artifacts still written),
3 configuration error, 4 infeasible or degenerate problem.

The config is one JSON document. Top-level keys: "scenario" (required),
"solver", "v_init", "rho". Scenario kinds: "tube" and "corridor" expose the
stock scenario parameters; "custom" takes a full path/constraints
description. Unknown keys anywhere are rejected with their dotted path.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass

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
from .equivalence import time_domain_check
from .errors import ConfigError, InfeasibleStartError, QuadtubeError
from .paths import make_analytic_path
from .scenarios import (
    QuadParams,
    Scenario,
    build_corridor_scenario,
    build_tube_scenario,
    quasi_static_q0,
)
from .solver import SolveContext, SolverConfig, batch_constraints, solve_continuation, trajectory_cost
from .transverse import from_transverse

EXIT_OK = 0
EXIT_STALLED = 2
EXIT_CONFIG = 3
EXIT_INFEASIBLE = 4

EMIT_CHOICES = ("csv", "summary", "plotdata", "iterlog")


@dataclass
class RunConfig:
    out_dir: str | None = None
    emit: tuple = ("csv", "summary")
    grid: int | None = None
    shrink: float | None = None
    rounds: int | None = None
    gauss_newton: bool | None = None
    v_init: float | None = None
    rho: float | None = None


# -- config validation helpers ---------------------------------------------


def _need_mapping(node, path):
    if not isinstance(node, dict):
        raise ConfigError(path, f"expected an object, got {type(node).__name__}")
    return dict(node)


def _reject_unknown(node, path):
    if node:
        key = sorted(node)[0]
        raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _take_number(node, key, path, default=None, required=False, positive=False):
    if key not in node:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    v = node.pop(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {v}")
    return float(v)


def _take_int(node, key, path, default=None):
    if key not in node:
        return default
    v = node.pop(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    return v


def _take_bool(node, key, path, default=None):
    if key not in node:
        return default
    v = node.pop(key)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected a boolean, got {type(v).__name__}")
    return v


def _take_blend_terms(node, key, path, default=None, required=False):
    if key not in node:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    raw = node.pop(key)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}.{key}", "expected a non-empty list of [A, b, s0] terms")
    out = []
    for i, term in enumerate(raw):
        if not isinstance(term, list) or len(term) != 3 or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in term
        ):
            raise ConfigError(f"{path}.{key}[{i}]", "expected [A, b, s0] numbers")
        out.append(tuple(float(x) for x in term))
    return tuple(out)


def _take_vector(node, key, path, size, default=None):
    if key not in node:
        return default
    raw = node.pop(key)
    if not isinstance(raw, list) or len(raw) != size or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) for x in raw
    ):
        raise ConfigError(f"{path}.{key}", f"expected a list of {size} numbers")
    return [float(x) for x in raw]


def _parse_profile(raw, path):
    """Profile spec: a number, {"ramp": {...}}, or {"base": x, "terms": [...]}."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return constant_profile(float(raw))
    node = _need_mapping(raw, path)
    if "ramp" in node:
        ramp = _need_mapping(node.pop("ramp"), f"{path}.ramp")
        _reject_unknown(node, path)
        args = {}
        for k in ("start", "end", "center", "sharpness", "s0", "s1"):
            args[k] = _take_number(ramp, k, f"{path}.ramp", required=True)
        _reject_unknown(ramp, f"{path}.ramp")
        return atan_ramp(args["start"], args["end"], args["center"], args["sharpness"],
                         args["s0"], args["s1"])
    base = _take_number(node, "base", path, required=True)
    raw_terms = node.pop("terms", [])
    _reject_unknown(node, path)
    if not isinstance(raw_terms, list):
        raise ConfigError(f"{path}.terms", "expected a list")
    terms = []
    for i, t in enumerate(raw_terms):
        tp = f"{path}.terms[{i}]"
        t = _need_mapping(t, tp)
        kind = t.pop("kind", None)
        if kind == "step":
            at = _take_number(t, "at", tp, required=True)
            amp = _take_number(t, "amplitude", tp, required=True)
            sharp = _take_number(t, "sharpness", tp, required=True, positive=True)
            _reject_unknown(t, tp)
            terms.append(atan_step(at, amp, sharp))
        elif kind == "pulse":
            on = _take_number(t, "on", tp, required=True)
            off = _take_number(t, "off", tp, required=True)
            amp = _take_number(t, "amplitude", tp, required=True)
            sharp = _take_number(t, "sharpness", tp, required=True, positive=True)
            if off <= on:
                raise ConfigError(tp, f"pulse window ill-ordered: on={on}, off={off}")
            _reject_unknown(t, tp)
            terms.append(atan_pulse(on, off, amp, sharp))
        else:
            raise ConfigError(f"{tp}.kind", f"expected 'step' or 'pulse', got {kind!r}")
    return sum_profile(base, terms)


_PATH_KEYS = {
    "circle": ("radius", "angle"),
    "helix": ("radius", "pitch", "turns"),
    "atan_s_curve": ("a", "b", "u_range"),
    "straight": ("length", "amplitude", "omega"),
    "atan_turn": ("length", "heading_terms"),
    "atan_turn_climb": ("length", "heading_terms", "climb_terms"),
}


def _parse_custom_path(node, path):
    node = _need_mapping(node, path)
    family = node.get("family")
    if family not in _PATH_KEYS:
        raise ConfigError(f"{path}.family", f"unknown path family {family!r}")
    allowed = set(_PATH_KEYS[family]) | {"family"}
    for key in node:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", f"unknown key for family {family!r}")
    try:
        return make_analytic_path(node)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid path spec: {exc}") from exc


def _parse_custom_constraints(node, path):
    node = _need_mapping(node, path)
    omega_max = _take_vector(node, "omega_max", path, 3, default=[10.0, 10.0, 4.0])
    f_min = _take_number(node, "f_min", path, required=True)
    f_max = _take_number(node, "f_max", path, required=True)
    if f_min >= f_max:
        raise ConfigError(f"{path}.thrust", f"f_min {f_min} must be below f_max {f_max}")
    phi_max = _parse_profile(node.pop("phi_max", 1.2), f"{path}.phi_max")
    theta_max = _parse_profile(node.pop("theta_max", 1.2), f"{path}.theta_max")
    ob_node = _need_mapping(node.pop("obstacle", None), f"{path}.obstacle")
    _reject_unknown(node, path)
    ob_type = ob_node.pop("type", None)
    if ob_type == "circular":
        r_obs = _parse_profile(ob_node.pop("r_obs", None), f"{path}.obstacle.r_obs")
        _reject_unknown(ob_node, f"{path}.obstacle")
        obstacle = CircularTube(r_obs)
    elif ob_type == "rectangular":
        profs = {}
        for k in ("w1_min", "w1_max", "w2_min", "w2_max"):
            if k not in ob_node:
                raise ConfigError(f"{path}.obstacle.{k}", "missing required key")
            profs[k] = _parse_profile(ob_node.pop(k), f"{path}.obstacle.{k}")
        _reject_unknown(ob_node, f"{path}.obstacle")
        obstacle = RectangularCorridor(**profs)
    else:
        raise ConfigError(f"{path}.obstacle.type",
                          f"expected 'circular' or 'rectangular', got {ob_type!r}")
    try:
        return ConstraintSet(
            omega_max=np.asarray(omega_max), f_min=f_min, f_max=f_max,
            phi_max=phi_max, theta_max=theta_max, obstacle=obstacle,
        )
    except QuadtubeError as exc:
        raise ConfigError(path, str(exc)) from exc


_TUBE_KEYS = ("length", "heading", "climb", "r_start", "r_end", "ramp_center",
              "ramp_sharpness", "omega_max", "f_min", "f_max", "phi_max", "theta_max",
              "mass", "gravity")
_CORRIDOR_KEYS = ("length", "heading", "corridor", "half_width", "wide_half_width",
                  "w2_floor", "obstacle_at", "obstacle_height", "edge_sharpness",
                  "omega_max", "f_min", "f_max", "phi_max", "theta_max", "mass",
                  "gravity", "obstacle_enabled")


def _stock_scenario_kwargs(node, path, keys):
    kwargs = {}
    for key in keys:
        if key not in node:
            continue
        if key in ("heading", "climb"):
            kwargs[key] = _take_blend_terms(node, key, path)
        elif key == "corridor":
            kwargs[key] = tuple(_take_vector(node, key, path, 2))
        elif key == "omega_max":
            kwargs[key] = _take_vector(node, key, path, 3)
        elif key == "obstacle_enabled":
            kwargs[key] = _take_bool(node, key, path)
        else:
            kwargs[key] = _take_number(node, key, path)
    _reject_unknown(node, path)
    return kwargs


def parse_config(text: str):
    """Validate a JSON config document.

    Returns (builder, solver_config, v_init, rho) where builder(v_init, rho,
    solver) constructs the Scenario. Raises ConfigError with a dotted key
    path on any violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"not valid JSON: {exc}") from exc
    doc = _need_mapping(doc, "")
    scn_node = _need_mapping(doc.pop("scenario", None), "scenario")
    solver_node = _need_mapping(doc.pop("solver", {}), "solver")
    v_init = _take_number(doc, "v_init", "", default=None, positive=True)
    rho = _take_number(doc, "rho", "", default=None, positive=True)
    _reject_unknown(doc, "")

    kwargs = {}
    for key, caster in (
        ("N", lambda: _take_int(solver_node, "N", "solver")),
        ("eps0", lambda: _take_number(solver_node, "eps0", "solver", positive=True)),
        ("nu0", lambda: _take_number(solver_node, "nu0", "solver", positive=True)),
        ("shrink", lambda: _take_number(solver_node, "shrink", "solver", positive=True)),
        ("max_outer", lambda: _take_int(solver_node, "max_outer", "solver")),
        ("max_newton", lambda: _take_int(solver_node, "max_newton", "solver")),
        ("tol_grad", lambda: _take_number(solver_node, "tol_grad", "solver", positive=True)),
        ("armijo_alpha", lambda: _take_number(solver_node, "armijo_alpha", "solver")),
        ("armijo_beta", lambda: _take_number(solver_node, "armijo_beta", "solver")),
        ("use_gauss_newton", lambda: _take_bool(solver_node, "use_gauss_newton", "solver")),
    ):
        v = caster()
        if v is not None:
            kwargs[key] = v
    _reject_unknown(solver_node, "solver")
    try:
        solver_cfg = SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc

    kind = scn_node.pop("kind", None)
    if kind == "tube":
        if rho is not None:
            raise ConfigError("rho", "tube scenario has no terminal target")
        scn_kwargs = _stock_scenario_kwargs(scn_node, "scenario", _TUBE_KEYS)

        def builder(v_init, rho, solver):
            if v_init is not None:
                scn_kwargs["v_init"] = v_init
            return build_tube_scenario(solver=solver, **scn_kwargs)

    elif kind == "corridor":
        scn_kwargs = _stock_scenario_kwargs(scn_node, "scenario", _CORRIDOR_KEYS)

        def builder(v_init, rho, solver):
            if v_init is not None:
                scn_kwargs["v_init"] = v_init
            if rho is not None:
                scn_kwargs["rho"] = rho
            return build_corridor_scenario(solver=solver, **scn_kwargs)

    elif kind == "custom":
        name = scn_node.pop("name", "custom")
        if not isinstance(name, str):
            raise ConfigError("scenario.name", "expected a string")
        ref_path = _parse_custom_path(scn_node.pop("path", None), "scenario.path")
        cs = _parse_custom_constraints(scn_node.pop("constraints", None),
                                       "scenario.constraints")
        mass = _take_number(scn_node, "mass", "scenario", required=True, positive=True)
        gravity = _take_number(scn_node, "gravity", "scenario", default=9.81, positive=True)
        target_node = scn_node.pop("target", None)
        q_d = None
        rho_file = None
        if target_node is not None:
            target_node = _need_mapping(target_node, "scenario.target")
            q_d = _take_vector(target_node, "q_d", "scenario.target", 8)
            if q_d is None:
                raise ConfigError("scenario.target.q_d", "missing required key")
            rho_file = _take_number(target_node, "rho", "scenario.target", positive=True)
            _reject_unknown(target_node, "scenario.target")
        _reject_unknown(scn_node, "scenario")
        if rho is not None and q_d is None:
            raise ConfigError("rho", "custom scenario has no terminal target")

        def builder(v_init, rho, solver):
            target = None
            if q_d is not None:
                target = TerminalTarget(np.asarray(q_d),
                                        rho=rho or rho_file or 1e3)
            vi = 1.0 if v_init is None else v_init
            params = QuadParams(mass, gravity)
            q0 = quasi_static_q0(ref_path, vi, mass, gravity)
            return Scenario(name, ref_path, cs, q0, target, params, solver)

    else:
        raise ConfigError("scenario.kind",
                          f"expected 'tube', 'corridor', or 'custom', got {kind!r}")
    return builder, solver_cfg, v_init, rho


def load_scenario(text: str, rc: RunConfig):
    """Build the Scenario and SolverConfig from config text plus overrides."""
    builder, solver_cfg, v_init_file, rho_file = parse_config(text)
    updates = {}
    if rc.grid is not None:
        updates["N"] = rc.grid
    if rc.shrink is not None:
        updates["shrink"] = rc.shrink
    if rc.rounds is not None:
        updates["max_outer"] = rc.rounds
    if rc.gauss_newton is not None:
        updates["use_gauss_newton"] = rc.gauss_newton
    if updates:
        fields = {k: getattr(solver_cfg, k) for k in (
            "N", "Qr", "Rr", "armijo_alpha", "armijo_beta", "eps0", "nu0", "shrink",
            "tol_grad", "max_newton", "max_outer", "use_gauss_newton")}
        fields.update(updates)
        try:
            solver_cfg = SolverConfig(**fields)
        except ValueError as exc:
            raise ConfigError("solver", str(exc)) from exc
    v_init = rc.v_init if rc.v_init is not None else v_init_file
    rho = rc.rho if rc.rho is not None else rho_file
    scenario = builder(v_init, rho, solver_cfg)
    return scenario, solver_cfg


# -- artifact writers --------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_csv(fp, header, rows):
    fp.write(",".join(header) + "\n")
    for row in rows:
        fp.write(",".join(_fmt(v) for v in row) + "\n")


def write_trajectory_csv(out_path, ctx, traj):
    names = ctx.cs.names()
    header = ["s", "w1", "w2", "vt", "vn", "vb", "phi", "theta", "psi",
              "omega1", "omega2", "omega3", "f", "p1", "p2", "p3"] + names
    c = batch_constraints(ctx, traj.q, traj.u)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fp:
        rows = []
        for i in range(traj.s.size):
            x = from_transverse(ctx.path, float(traj.s[i]), traj.q[i])
            rows.append(
                [traj.s[i], *traj.q[i], *traj.u[i][0:3], traj.u[i][3], *x[0:3], *c[i]]
            )
        _write_csv(fp, header, rows)


def write_iterations_csv(out_path, report):
    header = ["round", "iteration", "cost", "time_of_flight", "predicted_decrease",
              "step_length", "max_constraint"]
    with open(out_path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(",".join(header) + "\n")
        for rec in report.iterations:
            fp.write(",".join([
                str(rec.round_index), str(rec.iteration), _fmt(rec.cost),
                _fmt(rec.time_of_flight), _fmt(rec.predicted_decrease),
                _fmt(rec.step_length), _fmt(rec.max_constraint),
            ]) + "\n")


def write_plotdata(out_dir, ctx, traj):
    out_dir.mkdir(parents=True, exist_ok=True)
    tb = ctx.bounds
    s = traj.s
    # 3D polyline and boundary surface samples
    with open(out_dir / "path3d.csv", "w", encoding="utf-8", newline="\n") as fp:
        rows = []
        for i in range(s.size):
            x = from_transverse(ctx.path, float(s[i]), traj.q[i])
            rows.append([s[i], *ctx.frames.p[2 * i], *x[0:3]])
        _write_csv(fp, ["s", "path1", "path2", "path3", "p1", "p2", "p3"], rows)
    with open(out_dir / "boundary3d.csv", "w", encoding="utf-8", newline="\n") as fp:
        rows = []
        stride = max(1, s.size // 120)
        if tb.rectangular:
            lo1, hi1, lo2, hi2 = tb.pos
            for i in range(0, s.size, stride):
                R = ctx.frames.R[2 * i]
                p0 = ctx.frames.p[2 * i]
                for j, (a, b) in enumerate(
                    ((lo1[i], lo2[i]), (hi1[i], lo2[i]), (hi1[i], hi2[i]), (lo1[i], hi2[i]))
                ):
                    pt = p0 + a * R[:, 1] + b * R[:, 2]
                    rows.append([s[i], j, *pt])
        else:
            azimuths = np.linspace(0.0, 2.0 * math.pi, 17)[:-1]
            for i in range(0, s.size, stride):
                R = ctx.frames.R[2 * i]
                p0 = ctx.frames.p[2 * i]
                r = tb.pos[0][i]
                for j, az in enumerate(azimuths):
                    pt = p0 + r * (math.cos(az) * R[:, 1] + math.sin(az) * R[:, 2])
                    rows.append([s[i], j, *pt])
        _write_csv(fp, ["s", "sample", "x", "y", "z"], rows)
    # transverse distance with bound overlays
    with open(out_dir / "distance.csv", "w", encoding="utf-8", newline="\n") as fp:
        if tb.rectangular:
            lo1, hi1, lo2, hi2 = tb.pos
            rows = [
                [s[i], traj.q[i, 0], lo1[i], hi1[i], traj.q[i, 1], lo2[i], hi2[i]]
                for i in range(s.size)
            ]
            _write_csv(fp, ["s", "w1", "w1_min", "w1_max", "w2", "w2_min", "w2_max"], rows)
        else:
            rows = [
                [s[i], math.hypot(traj.q[i, 0], traj.q[i, 1]), tb.pos[0][i]]
                for i in range(s.size)
            ]
            _write_csv(fp, ["s", "distance", "r_obs"], rows)
    # scalar series with bound overlays
    with open(out_dir / "series.csv", "w", encoding="utf-8", newline="\n") as fp:
        header = ["s", "vt", "phi", "phi_max", "theta", "theta_max",
                  "omega1", "omega1_max", "omega2", "omega2_max", "omega3", "omega3_max",
                  "f", "f_min", "f_max"]
        om = ctx.cs.omega_max
        rows = [
            [s[i], traj.q[i, 2], traj.q[i, 5], tb.phi_max[i], traj.q[i, 6], tb.theta_max[i],
             traj.u[i, 0], om[0], traj.u[i, 1], om[1], traj.u[i, 2], om[2],
             traj.u[i, 3], ctx.cs.f_min, ctx.cs.f_max]
            for i in range(s.size)
        ]
        _write_csv(fp, header, rows)


def write_summary(out_path, scenario, ctx, cfg, traj, report, wall_time, partial):
    cb = trajectory_cost(ctx, traj, _final_bp(cfg, report))
    c = batch_constraints(ctx, traj.q, traj.u)
    margins = {name: float(np.max(c[:, j])) for j, name in enumerate(ctx.cs.names())}
    terminal_error = None
    if ctx.target is not None:
        terminal_error = float(np.linalg.norm(ctx.target.q_d - traj.q[-1]))
    doc = {
        "scenario": scenario.name,
        "grid": ctx.N,
        "status": report.status,
        "time_of_flight": cb.time_of_flight,
        "final_cost": cb.total,
        "max_constraint": cb.max_constraint,
        "constraint_margins": margins,
        "terminal_error": terminal_error,
        "rounds": [
            {
                "round": r.round_index,
                "epsilon": r.epsilon,
                "nu": r.nu,
                "iterations": r.iterations,
                "cost": r.cost,
                "time_of_flight": r.time_of_flight,
                "max_constraint": r.max_constraint,
                "status": r.status,
            }
            for r in report.rounds
        ],
        "partial_artifacts": sorted(partial),
        "wall_time_s": wall_time,
    }
    with open(out_path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump(doc, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _final_bp(cfg, report):
    from .constraints import BarrierParams

    if report.rounds:
        last = report.rounds[-1]
        return BarrierParams(last.epsilon, last.nu)
    return BarrierParams(cfg.eps0, cfg.nu0)


def run(scenario: Scenario, cfg: SolverConfig, rc: RunConfig) -> int:
    """Solve and emit artifacts; returns the process exit code."""
    from pathlib import Path

    t0 = time.perf_counter()
    ctx = SolveContext.for_scenario(scenario, cfg.N)
    traj, report = solve_continuation(scenario, cfg, ctx=ctx)
    wall = time.perf_counter() - t0

    out = Path(rc.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    emit = set(rc.emit)
    partial = set()
    if "csv" in emit:
        try:
            write_trajectory_csv(out / "trajectory.csv", ctx, traj)
        except OSError:
            partial.add("trajectory.csv")
    if "iterlog" in emit:
        try:
            write_iterations_csv(out / "iterations.csv", report)
        except OSError:
            partial.add("iterations.csv")
    if "plotdata" in emit:
        try:
            write_plotdata(out / "plotdata", ctx, traj)
        except OSError:
            partial.add("plotdata")
    if "summary" in emit:
        try:
            write_summary(out / "summary.json", scenario, ctx, cfg, traj, report, wall, partial)
        except OSError:
            print(f"error: could not write {out / 'summary.json'}", file=sys.stderr)
            return EXIT_INFEASIBLE
    final = report.rounds[-1] if report.rounds else None
    print(
        f"{scenario.name}: status={report.status} "
        f"T={final.time_of_flight:.6f} s cost={final.cost:.6f} "
        f"max_c={final.max_constraint:.3e} rounds={len(report.rounds)} "
        f"wall={wall:.1f} s"
        if final
        else f"{scenario.name}: status={report.status}"
    )
    return EXIT_STALLED if report.stalled else EXIT_OK


def _read_config(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return fp.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc


def _add_common(p):
    p.add_argument("config", help="JSON configuration file")
    p.add_argument("--grid", type=int, default=None, help="override station count N")
    p.add_argument("--shrink", type=float, default=None, help="override continuation shrink")
    p.add_argument("--rounds", type=int, default=None, help="override max continuation rounds")
    p.add_argument("--gauss-newton", choices=("true", "false"), default=None,
                   help="override the Gauss-Newton/full-Newton switch")
    p.add_argument("--v-init", type=float, default=None, help="override initial speed [m/s]")
    p.add_argument("--rho", type=float, default=None, help="override terminal penalty weight")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="quadtube",
        description="Minimum-time quadrotor trajectories through tubes and corridors.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the solver and write artifacts")
    _add_common(p_solve)
    p_solve.add_argument("--out", default=".", help="output directory")
    p_solve.add_argument("--emit", default="csv,summary",
                         help="comma list from: csv,summary,plotdata,iterlog")

    p_val = sub.add_parser("validate", help="parse the config and build the scenario")
    _add_common(p_val)

    p_orc = sub.add_parser("oracle", help="solve, then check space/time equivalence")
    _add_common(p_orc)

    args = ap.parse_args(argv)

    rc = RunConfig(
        out_dir=getattr(args, "out", None),
        grid=args.grid,
        shrink=args.shrink,
        rounds=args.rounds,
        gauss_newton=None if args.gauss_newton is None else args.gauss_newton == "true",
        v_init=args.v_init,
        rho=args.rho,
    )
    if args.command == "solve":
        emit = tuple(x for x in args.emit.split(",") if x)
        for item in emit:
            if item not in EMIT_CHOICES:
                print(f"config error: emit: unknown artifact {item!r}", file=sys.stderr)
                return EXIT_CONFIG
        rc.emit = emit

    try:
        scenario, cfg = load_scenario(_read_config(args.config), rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadtubeError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    if args.command == "validate":
        try:
            ctx = SolveContext.for_scenario(scenario, cfg.N)
        except QuadtubeError as exc:
            print(f"scenario error: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(
            f"{scenario.name}: valid (L={scenario.path.length:.4f} m, "
            f"{ctx.cs.count} constraints, N={cfg.N}, "
            f"target={'yes' if scenario.target is not None else 'no'})"
        )
        return EXIT_OK

    try:
        if args.command == "solve":
            return run(scenario, cfg, rc)
        # oracle
        ctx = SolveContext.for_scenario(scenario, cfg.N)
        traj, report = solve_continuation(scenario, cfg, ctx=ctx)
        rep = time_domain_check(ctx, traj, refine=2)
        ok = rep.passed()
        print(
            f"{scenario.name}: equivalence at N={rep.grid}: "
            f"position error {rep.position_error:.3e} m, "
            f"duration {rep.duration:.6f} s vs quadrature {rep.time_of_flight:.6f} s "
            f"(rel gap {rep.duration_gap_rel:.3e}) -> {'ok' if ok else 'FAIL'}"
        )
        if not ok:
            return EXIT_INFEASIBLE
        return EXIT_STALLED if report.stalled else EXIT_OK
    except InfeasibleStartError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except QuadtubeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
