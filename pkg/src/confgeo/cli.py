"""Command-line interface.

Every run is driven by a single JSON config document plus the flags
``--config <path>``, ``--out <dir>``, ``--seed <u64>`` and repeatable
``--format csv|json|svg``.  Identical config and seed give byte-identical
outputs.  Exit codes: 0 success, 1 numeric failure, 2 configuration error.

Subcommands (each reads its own config section):

* ``trace``  -- integrate a conformal geodesic; CSV trace + JSON summary.
* ``heart``  -- mesh a heart boundary; JSON mesh + summary + SVG section.
* ``expmap`` -- pointwise exponential-map operations.
* ``fscan``  -- tabulate the wedge-derivative functions f1, f2, f3.
* ``size``   -- heart size estimates (R, R1, R2).
* ``spiral`` -- ball-event diagnostics along a trace.
* ``verify`` -- run named invariant suites; exit 1 if any fails.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import checks, expmap, flow, spiral, svgout
from .errors import ConfgeoError
from .metricfield import MetricField

METRIC_KINDS = ("euclidean", "sphere", "hyperbolic", "conformally_flat",
                "custom")


class ConfigError(Exception):
    pass


_REQUIRED = object()


def _get(section, key, kind=None, default=_REQUIRED, choices=None, where=""):
    if key not in section:
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"missing required field {where}{key}")
    val = section[key]
    if kind is not None and not isinstance(val, kind):
        names = kind if isinstance(kind, tuple) else (kind,)
        raise ConfigError(
            f"field {where}{key} must be {'/'.join(t.__name__ for t in names)}, "
            f"got {type(val).__name__}")
    if choices is not None and val not in choices:
        raise ConfigError(f"field {where}{key} must be one of {choices}, "
                          f"got {val!r}")
    return val


def build_metric(cfg) -> MetricField:
    sec = _get(cfg, "metric", dict)
    kind = _get(sec, "kind", str, choices=METRIC_KINDS, where="metric.")
    d = _get(sec, "dimension", int, default=3, where="metric.")
    if d < 3:
        raise ConfigError("metric.dimension must be >= 3")
    if kind == "euclidean":
        return MetricField.euclidean(d)
    if kind == "sphere":
        return MetricField.sphere(d, _get(sec, "radius", (int, float),
                                          default=1.0, where="metric."))
    if kind == "hyperbolic":
        return MetricField.hyperbolic(d, _get(sec, "radius", (int, float),
                                              default=1.0, where="metric."))
    if kind == "conformally_flat":
        return MetricField.conformally_flat(
            d, _get(sec, "omega", str, where="metric."))
    comps = _get(sec, "components", list, where="metric.")
    return MetricField.custom(d, comps)


def _vector(section, key, d, where=""):
    v = _get(section, key, list, where=where)
    if len(v) != d or not all(isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"field {where}{key} must be a list of {d} numbers")
    return np.asarray(v, dtype=float)


def _integrator(sec) -> flow.IntegratorConfig:
    max_step = sec.get("max_step")
    return flow.IntegratorConfig(
        rel_tol=_get(sec, "rel_tol", (int, float), default=1e-10),
        abs_tol=_get(sec, "abs_tol", (int, float), default=1e-12),
        max_step=float(max_step) if max_step is not None else np.inf,
        projection=_get(sec, "projection", bool, default=True),
        max_steps=_get(sec, "max_steps", int, default=1_000_000))


def _dump_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _formats(args, *available):
    chosen = args.format or list(available)
    return [f for f in chosen if f in available]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_trace(cfg, args, out):
    M = build_metric(cfg)
    sec = _get(cfg, "trace", dict)
    x0 = _vector(sec, "x0", M.d, "trace.")
    u0 = _vector(sec, "u0", M.d, "trace.")
    a0 = _vector(sec, "a0", M.d, "trace.") if "a0" in sec else np.zeros(M.d)
    t_end = _get(sec, "t_end", (int, float), where="trace.")
    if t_end <= 0:
        raise ConfigError("trace.t_end must be positive")
    icfg = _integrator(sec)
    s0 = flow.make_cg_state(M, x0, u0, a0)
    tr = flow.integrate_cg(M, s0, float(t_end), icfg)
    summary = {
        "kind": M.kind, "t_end": tr.t_end, "samples": len(tr.t),
        "accepted_steps": tr.accepted, "rejected_steps": tr.rejected,
        "max_res_unit": float(tr.res_unit.max()),
        "max_res_perp": float(tr.res_perp.max()),
        "max_drift": tr.max_drift,
        "endpoint": list(tr.x[-1]),
    }
    if M.kind == "sphere" and not np.any(a0):
        geo = flow.integrate_metric_geodesic(M, s0.x, s0.u, float(t_end), icfg)
        ts = np.linspace(0.0, float(t_end), 101)
        xc, _, _ = tr.eval_many(ts)
        xg, _, _ = geo.eval_many(ts)
        dev = float(np.max(np.abs(xc - xg)))
        summary["metric_geodesic_deviation"] = dev
        summary["matches_metric_geodesic"] = dev <= 1e-7
    fmts = _formats(args, "csv", "json", "svg")
    if "csv" in fmts:
        flow.write_trace_csv(tr, os.path.join(out, "trace.csv"))
    if "json" in fmts:
        _dump_json(summary, os.path.join(out, "trace_summary.json"))
    if "svg" in fmts:
        svgout.write(os.path.join(out, "trace.svg"),
                     [(tr.x[:, :2], "#1f6feb")],
                     [(tr.x[0, :2], "#d1242f")])
    return 0


def cmd_heart(cfg, args, out):
    M = build_metric(cfg)
    sec = _get(cfg, "heart", dict)
    p = _vector(sec, "p", M.d, "heart.")
    u0 = _vector(sec, "u0", M.d, "heart.")
    resolution = _get(sec, "resolution", int, default=32, where="heart.")
    n_phi = sec.get("n_phi")
    r_field = _get(sec, "r", (int, float, str), where="heart.")
    summary = {"kind": M.kind}
    if isinstance(r_field, str):
        if r_field != "auto":
            raise ConfigError("heart.r must be a number or \"auto\"")
        scan = expmap.injectivity_scan(
            M, p, u0,
            _get(sec, "scan_r_max", (int, float), default=1.0, where="heart."),
            _get(sec, "scan_resolution", int, default=8, where="heart."))
        r = scan.est_r
        summary["injectivity_scan"] = scan.to_dict()
        if r <= 0:
            raise ConfgeoError("injectivity scan found no collision-free radius")
    else:
        r = float(r_field)
    g = M.metric(p)
    u0 = u0 / math.sqrt(float(u0 @ g @ u0))
    H = expmap.trace_heart_boundary(M, p, u0, r, resolution,
                                    n_phi=int(n_phi) if n_phi else None)
    summary.update({"r": r, "n_vertices": len(H.mesh.vertices),
                    "n_faces": H.mesh.n_faces,
                    "boundary_tol": H.boundary_tol})
    cs = expmap.heart_cross_section(M, p, u0, H.frame[1], r,
                                    _get(sec, "section_points", int,
                                         default=360, where="heart."))
    if M.kind == "euclidean":
        dev = float(np.max(np.abs(cs.rho
                                  - expmap.cardioid_boundary(r, cs.phi))))
        summary["cardioid_max_deviation"] = dev
    fmts = _formats(args, "json", "svg")
    if "json" in fmts:
        H.save_json(os.path.join(out, "heart.json"))
        _dump_json(summary, os.path.join(out, "heart_summary.json"))
    if "svg" in fmts:
        pts2d = np.column_stack([cs.rho * np.cos(cs.phi),
                                 cs.rho * np.sin(cs.phi)])
        svgout.write(os.path.join(out, "heart.svg"),
                     [(pts2d, "#a40e26")], [((0.0, 0.0), "#1f6feb")])
    return 0


def cmd_expmap(cfg, args, out):
    M = build_metric(cfg)
    sec = _get(cfg, "expmap", dict)
    op = _get(sec, "op", str,
              choices=("exp", "dexp", "ray-angle", "remainder"),
              where="expmap.")
    p = _vector(sec, "p", M.d, "expmap.")
    u0 = _vector(sec, "u0", M.d, "expmap.")
    g = M.metric(p)
    u0 = u0 / math.sqrt(float(u0 @ g @ u0))
    result = {"op": op, "kind": M.kind}
    if op in ("exp", "dexp"):
        A = _vector(sec, "A", M.d, "expmap.")
        if op == "exp":
            result["point"] = list(expmap.exp_cg(M, p, u0, A))
        else:
            result["derivative"] = list(expmap.dexp_zero(M, p, u0, A))
    else:
        theta0 = float(_get(sec, "theta0", (int, float), where="expmap."))
        frame = M.frame(p, u0)
        if op == "ray-angle":
            h = _get(sec, "h", (int, float), default=1e-3, where="expmap.")
            ang = expmap.ray_image_angle(M, p, u0, frame[1], theta0, float(h))
            result.update({"angle": ang,
                           "law_value": math.pi * math.sin(theta0),
                           "deviation": abs(ang - math.pi * math.sin(theta0))})
        else:
            fit = expmap.remainder_order(M, p, u0, theta0)
            result.update({"slope": fit.slope, "degenerate": fit.degenerate,
                           "lambdas": list(fit.lambdas),
                           "residuals": list(fit.residuals)})
    _dump_json(result, os.path.join(out, "expmap.json"))
    return 0


def cmd_fscan(cfg, args, out):
    sec = cfg.get("fscan", {})
    theta_max = _get(sec, "theta_max", (int, float), default=1.4,
                     where="fscan.")
    n = _get(sec, "n", int, default=57, where="fscan.")
    grid = np.linspace(0.0, float(theta_max), n)
    f1, f2, f3 = expmap.f_functions(grid)
    fmts = _formats(args, "csv", "json")
    if "csv" in fmts:
        with open(os.path.join(out, "fscan.csv"), "w", newline="\n") as fh:
            fh.write("theta,f1,f2,f3\n")
            for row in zip(grid, f1, f2, f3):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if "json" in fmts:
        _dump_json({"theta_max": theta_max, "n": n,
                    "minima": [float(f1.min()), float(f2.min()),
                               float(f3.min())],
                    "all_positive": bool(min(f1.min(), f2.min(),
                                             f3.min()) > 0)},
                   os.path.join(out, "fscan.json"))
    return 0


def cmd_size(cfg, args, out, seed):
    M = build_metric(cfg)
    sec = _get(cfg, "size", dict)
    p = _vector(sec, "p", M.d, "size.")
    u0 = _vector(sec, "u0", M.d, "size.")
    g = M.metric(p)
    u0 = u0 / math.sqrt(float(u0 @ g @ u0))
    r = float(_get(sec, "r", (int, float), where="size."))
    resolution = _get(sec, "resolution", int, default=24, where="size.")
    sampling = spiral.SizeSampling(
        n_centers=_get(sec, "n_centers", int, default=16, where="size."),
        n_hemisphere=_get(sec, "n_hemisphere", int, default=64, where="size."),
        n_ball_dirs=_get(sec, "n_ball_dirs", int, default=26, where="size."),
        n_shells=_get(sec, "n_shells", int, default=4, where="size."),
        boundary_tol=sec.get("boundary_tol"),
        seed=seed)
    H = expmap.trace_heart_boundary(M, p, u0, r, resolution)
    est = spiral.heart_size_R(M, p, u0, H, sampling)
    _dump_json({"kind": M.kind, "r": r, "resolution": resolution,
                "estimate": est.to_dict()},
               os.path.join(out, "sizes.json"))
    return 0


def cmd_spiral(cfg, args, out):
    M = build_metric(cfg)
    sec = _get(cfg, "spiral", dict)
    x0 = _vector(sec, "x0", M.d, "spiral.")
    u0 = _vector(sec, "u0", M.d, "spiral.")
    a0 = _vector(sec, "a0", M.d, "spiral.") if "a0" in sec else np.zeros(M.d)
    t_end = float(_get(sec, "t_end", (int, float), where="spiral."))
    p_star = _vector(sec, "p_star", M.d, "spiral.")
    radii = _get(sec, "radii", list, where="spiral.")
    if not radii or not all(isinstance(r, (int, float)) and r > 0
                            for r in radii):
        raise ConfigError("spiral.radii must be a list of positive numbers")
    s0 = flow.make_cg_state(M, x0, u0, a0)
    tr = flow.integrate_cg(M, s0, t_end, _integrator(sec))
    rep = spiral.spiral_diagnostic(tr, p_star, [float(r) for r in radii], M)
    events = {}
    for r in radii:
        evs = spiral.ball_events(tr, p_star, float(r), M)
        events[f"{float(r):g}"] = [
            {"kind": e.kind, "t": e.t, "point": list(e.point)} for e in evs]
    _dump_json({"kind": M.kind, "report": rep.to_dict(), "events": events},
               os.path.join(out, "spiral.json"))
    return 0


def cmd_verify(cfg, args, out, seed):
    sec = cfg.get("verify", {})
    suites = _get(sec, "suites", (list, str), default="all", where="verify.")
    quick = _get(sec, "quick", bool, default=True, where="verify.")
    if suites == "all" and quick:
        suites = list(checks.QUICK_SUITES)
    try:
        results = checks.run_suites(suites, seed=seed)
    except KeyError as exc:
        raise ConfigError(f"unknown verify suite {exc.args[0]!r}; known: "
                          f"{sorted(checks.SUITES)}") from None
    report = {"seed": seed,
              "suites": {r.name: r.to_dict() for r in results},
              "all_passed": all(r.passed for r in results)}
    _dump_json(report, os.path.join(out, "verify.json"))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    return 0 if report["all_passed"] else 1


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="confgeo",
        description="Conformal geodesic flows, exponential-map hearts, and "
                    "no-spiralling diagnostics on chart metrics.")
    parser.add_argument("command",
                        choices=("trace", "heart", "expmap", "fscan", "size",
                                 "spiral", "verify"))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="overrides the config seed")
    parser.add_argument("--format", action="append",
                        choices=("csv", "json", "svg"),
                        help="restrict emitted formats (repeatable)")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        print("config error: seed must be a non-negative integer",
              file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)

    try:
        if args.command == "trace":
            return cmd_trace(cfg, args, args.out)
        if args.command == "heart":
            return cmd_heart(cfg, args, args.out)
        if args.command == "expmap":
            return cmd_expmap(cfg, args, args.out)
        if args.command == "fscan":
            return cmd_fscan(cfg, args, args.out)
        if args.command == "size":
            return cmd_size(cfg, args, args.out, seed)
        if args.command == "spiral":
            return cmd_spiral(cfg, args, args.out)
        return cmd_verify(cfg, args, args.out, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfgeoError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
