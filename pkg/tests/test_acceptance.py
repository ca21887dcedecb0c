"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  Every tolerance is pinned here; the heavy suites reuse the
library's check functions at full scale.  Target runtime is a few minutes.
"""
import json
import math

import numpy as np
import pytest

from confgeo import checks
from confgeo.cli import main as cli_main


def _report(k, name, passed, detail):
    line = f"ACCEPTANCE {k:02d} [{name}] {'PASS' if passed else 'FAIL'}: {detail}"
    print(line)
    assert passed, line


def test_criterion_01_circle_oracle():
    res = checks.check_circle_oracle(tol=1e-8)
    _report(1, "circle-oracle", res.passed,
            f"sup error {res.details['sup_error']:.2e} <= 1e-8 over t in [0,10]")


def test_criterion_02_constraint_preservation():
    res = checks.check_constraints(tol=1e-8)
    _report(2, "constraints", res.passed,
            f"max sampled residual {res.details['worst_sampled']:.2e} <= 1e-8 "
            f"(projection-off drift {res.details['worst_drift_projection_off']:.2e})")


def test_criterion_03_conformal_invariance():
    res = checks.check_conformal_invariance(n_triples=10, tol=1e-6)
    _report(3, "conformal-invariance", res.passed,
            f"worst point-set deviation {res.details['worst_deviation']:.2e} "
            f"<= 1e-6 over 10 triples")


def test_criterion_04_schouten_correctness():
    res = checks.check_constant_curvature(n_points=50, tol=1e-8)
    sub = res.details["transform_identity"]
    _report(4, "schouten", res.passed,
            f"|L -+ g/2| {res.details['worst_deviation']:.2e} at 50 points; "
            f"transform rule deviation {sub['worst_deviation']:.2e} <= 1e-8")


def test_criterion_05_ray_angle_law():
    res = checks.check_ray_angle(tol=5e-3)
    _report(5, "ray-angle", res.passed,
            f"worst |angle - pi sin(theta0)| {res.details['worst_deviation']:.2e}"
            f" <= 5e-3 on {res.details['metrics']}")


def test_criterion_06_dexp_closed_form():
    res = checks.check_dexp_agreement(h=1e-4, tol=1e-4)
    _report(6, "dexp", res.passed,
            f"worst FD-vs-closed-form deviation {res.details['worst_deviation']:.2e}"
            f" <= 1e-4")


def test_criterion_07_f_functions():
    res = checks.check_f_functions(tol_end=1e-10)
    mins = res.details["grid_minima"]
    _report(7, "f-functions", res.passed,
            f"grid minima {[f'{m:.3g}' for m in mins]} all > 0; "
            f"endpoint values exact to 1e-10")


def test_criterion_08_cardioid():
    res = checks.check_cardioid(r=0.5, tol=1e-6)
    _report(8, "cardioid", res.passed,
            f"cross-section max deviation {res.details['max_deviation']:.2e} "
            f"<= 1e-6; far pole deviation {res.details['far_pole_deviation']:.2e}")


def test_criterion_09_remainder_order():
    from confgeo import MetricField, remainder_order
    E = MetricField.euclidean(3)
    S = MetricField.sphere(3)
    H = MetricField.hyperbolic(3)
    fit_e = remainder_order(E, np.zeros(3), np.array([1.0, 0, 0]), math.pi / 4)
    ps = np.array([0.2, 0.1, -0.1])
    fit_s = remainder_order(S, ps, S.frame(ps, [1, 0, 0])[0], math.pi / 4)
    ph = np.array([0.1, 0.0, 0.2])
    fit_h = remainder_order(H, ph, H.frame(ph, [1, 0, 0])[0], math.pi / 6)
    passed = (fit_e.degenerate and not fit_s.degenerate
              and not fit_h.degenerate and fit_s.slope >= 2.7
              and fit_h.slope >= 2.7)
    _report(9, "remainder-order", passed,
            f"flat remainder at noise ({fit_e.residuals.max():.1e}, degenerate "
            f"reported); slopes sphere {fit_s.slope:.3f}, "
            f"hyperbolic {fit_h.slope:.3f} >= 2.7")


def test_criterion_10_heart_exit():
    res = checks.check_heart_exit(tol_closed=1e-4)
    ax = res.details["axis"]
    ua = res.details["unit_acc"]
    two_pi_log = [c["two_pi_r_held"] for c in res.details["curved"]]
    _report(10, "heart-exit", res.passed,
            f"axis exit err {ax['error']:.2e}, |a0|=1 exit err {ua['error']:.2e}"
            f" <= 1e-4; all exits within 4*pi*r; 2*pi*r held per curved run: "
            f"{two_pi_log}")


def test_criterion_11_injectivity_scan():
    res = checks.check_injectivity_euclid()
    _report(11, "injectivity", res.passed,
            f"flat scan est_r = {res.details['est_r']} (cap active, "
            f"no collisions up to r = {res.details['clean_r']})")


def test_criterion_12_no_spiral_suite():
    res = checks.check_no_spiral(n_traces=20, t_end=200.0,
                                 radii=(0.4, 0.2, 0.1, 0.05), n_pstars=5)
    _report(12, "no-spiral", res.passed,
            f"20 traces x 3 metrics x 4 radii x 5 centers: "
            f"{res.details['truncations_retried']} truncations retried, "
            f"{len(res.details['unresolved'])} unresolved TRAPPED verdicts")


def test_criterion_13_size_positivity():
    res = checks.check_sizes(resolution=24, stability_tol=0.05)
    summary = {k: (f"R={v['fine']['R']:.3f}",
                   f"stable={v['stable']}", f"consistent={v['consistent']}")
               for k, v in res.details.items()}
    _report(13, "sizes", res.passed,
            f"positive, 5%-stable under mesh refinement, min(R1, R2/2) <= R: "
            f"{summary}")


def test_criterion_14_determinism(tmp_path):
    cfg = {
        "metric": {"kind": "sphere", "dimension": 3, "radius": 1.0},
        "seed": 20250809,
        "trace": {"x0": [0.2, 0.0, 0.0], "u0": [0.0, 1.0, 0.0],
                  "a0": [0.0, 0.0, 0.5], "t_end": 5.0},
        "size": {"p": [0.1, 0.0, 0.0], "u0": [1.0, 0.0, 0.0], "r": 0.15,
                 "resolution": 16, "n_hemisphere": 12, "n_centers": 8,
                 "n_ball_dirs": 12, "n_shells": 3},
        "fscan": {"n": 29},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    blobs = {}
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("trace", "size", "fscan"):
            code = cli_main([cmd, "--config", str(cfg_path),
                             "--out", str(out)])
            assert code == 0, f"{cmd} failed"
        for f in sorted(out.iterdir()):
            blobs.setdefault(f.name, []).append(f.read_bytes())
    identical = all(a == b for a, b in blobs.values())
    _report(14, "determinism", identical,
            f"byte-identical outputs across repeated runs: "
            f"{sorted(blobs)}")
