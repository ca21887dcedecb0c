import json
import math

import numpy as np
import pytest

from confgeo.cli import main

CIRCLE_CFG = {
    "metric": {"kind": "euclidean", "dimension": 3},
    "seed": 42,
    "trace": {"x0": [0.0, 0.0, 0.0], "u0": [1.0, 0.0, 0.0],
              "a0": [0.0, 1.0, 0.0], "t_end": 10.0},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra):
    cfg_path = write_cfg(tmp_path, cfg)
    out = tmp_path / "out"
    code = main([command, "--config", cfg_path, "--out", str(out), *extra])
    return code, out


def test_trace_circle_csv(tmp_path):
    code, out = run(tmp_path, "trace", CIRCLE_CFG)
    assert code == 0
    lines = (out / "trace.csv").read_text().strip().split("\n")
    assert lines[0].startswith("t,x1,x2,x3,u1")
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    near_pi = min(rows, key=lambda r: abs(r[0] - math.pi))
    # the circle passes x = (0, 2, 0) at t = pi
    assert abs(near_pi[1] - math.sin(near_pi[0])) < 1e-7
    assert abs(near_pi[2] - (1 - math.cos(near_pi[0]))) < 1e-7
    assert abs(near_pi[2] - 2.0) < 0.05
    summary = json.loads((out / "trace_summary.json").read_text())
    assert summary["max_res_unit"] <= 1e-8
    assert (out / "trace.svg").exists()


def test_trace_sphere_geodesic_crosscheck(tmp_path):
    cfg = {"metric": {"kind": "sphere", "dimension": 3, "radius": 1.0},
           "trace": {"x0": [0.3, 0.0, 0.0], "u0": [0.0, 1.0, 0.0],
                     "t_end": 3.0}}
    code, out = run(tmp_path, "trace", cfg)
    assert code == 0
    summary = json.loads((out / "trace_summary.json").read_text())
    assert summary["matches_metric_geodesic"] is True


def test_bad_json_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["trace", "--config", str(path), "--out",
                 str(tmp_path)]) == 2


def test_missing_field_named(tmp_path, capsys):
    cfg = {"metric": {"kind": "euclidean"}, "trace": {"x0": [0, 0, 0]}}
    code, _ = run(tmp_path, "trace", cfg)
    assert code == 2
    assert "trace.u0" in capsys.readouterr().err


def test_bad_metric_kind(tmp_path, capsys):
    cfg = {"metric": {"kind": "torus"}, "trace": {}}
    code, _ = run(tmp_path, "trace", cfg)
    assert code == 2
    assert "metric.kind" in capsys.readouterr().err


def test_heart_euclid_summary(tmp_path):
    cfg = {"metric": {"kind": "euclidean"},
           "heart": {"p": [0.0, 0.0, 0.0], "u0": [1.0, 0.0, 0.0],
                     "r": 0.5, "resolution": 16, "section_points": 240}}
    code, out = run(tmp_path, "heart", cfg)
    assert code == 0
    summary = json.loads((out / "heart_summary.json").read_text())
    assert summary["cardioid_max_deviation"] <= 1e-6
    mesh = json.loads((out / "heart.json").read_text())
    assert len(mesh["vertices"]) == summary["n_vertices"]
    assert (out / "heart.svg").exists()


def test_heart_too_coarse_exits_1(tmp_path, capsys):
    cfg = {"metric": {"kind": "euclidean"},
           "heart": {"p": [0.0, 0.0, 0.0], "u0": [1.0, 0.0, 0.0],
                     "r": 0.5, "resolution": 2}}
    code, _ = run(tmp_path, "heart", cfg)
    assert code == 1
    assert "ResolutionTooCoarse" in capsys.readouterr().err


def test_expmap_ray_angle(tmp_path):
    cfg = {"metric": {"kind": "euclidean"},
           "expmap": {"op": "ray-angle", "p": [0.0, 0.0, 0.0],
                      "u0": [1.0, 0.0, 0.0], "theta0": math.pi / 6}}
    code, out = run(tmp_path, "expmap", cfg)
    assert code == 0
    res = json.loads((out / "expmap.json").read_text())
    assert abs(res["angle"] - math.pi / 2) < 1e-4


def test_fscan_outputs(tmp_path):
    code, out = run(tmp_path, "fscan", {"fscan": {"n": 29}})
    assert code == 0
    lines = (out / "fscan.csv").read_text().strip().split("\n")
    assert lines[0] == "theta,f1,f2,f3"
    assert len(lines) == 30
    meta = json.loads((out / "fscan.json").read_text())
    assert meta["all_positive"] is True


def test_spiral_report(tmp_path):
    cfg = {"metric": {"kind": "euclidean"},
           "spiral": {"x0": [0.0, 0.0, 0.0], "u0": [1.0, 0.0, 0.0],
                      "a0": [0.0, 1.0, 0.0], "t_end": 10.0,
                      "p_star": [0.3, 0.2, 0.1], "radii": [0.4, 0.2]}}
    code, out = run(tmp_path, "spiral", cfg)
    assert code == 0
    rep = json.loads((out / "spiral.json").read_text())
    verdicts = {v["radius"]: v["verdict"] for v in rep["report"]["verdicts"]}
    assert set(verdicts.values()) <= {"EXITED", "NEVER-ENTERED"}


def test_verify_selected_suite(tmp_path):
    cfg = {"verify": {"suites": ["f-positivity", "circle-oracle"]}}
    code, out = run(tmp_path, "verify", cfg)
    assert code == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["all_passed"] is True
    assert set(rep["suites"]) == {"f-positivity", "circle-oracle"}


def test_verify_unknown_suite(tmp_path, capsys):
    cfg = {"verify": {"suites": ["nonsense"]}}
    code, _ = run(tmp_path, "verify", cfg)
    assert code == 2
    assert "unknown verify suite" in capsys.readouterr().err


def test_determinism_byte_identical(tmp_path):
    cfg_path = write_cfg(tmp_path, CIRCLE_CFG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["trace", "--config", cfg_path, "--out", str(out),
                     "--seed", "7"]) == 0
        outs.append(out)
    for fname in ("trace.csv", "trace_summary.json", "trace.svg"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_determinism_size_command(tmp_path):
    cfg = {"metric": {"kind": "euclidean"},
           "size": {"p": [0.0, 0.0, 0.0], "u0": [1.0, 0.0, 0.0], "r": 0.5,
                    "resolution": 12, "n_hemisphere": 8, "n_centers": 6,
                    "n_ball_dirs": 10, "n_shells": 3}}
    cfg_path = write_cfg(tmp_path, cfg)
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["size", "--config", cfg_path, "--out", str(out),
                     "--seed", "11"]) == 0
        blobs.append((out / "sizes.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_format_restriction(tmp_path):
    code, out = run(tmp_path, "trace", CIRCLE_CFG, "--format", "csv")
    assert code == 0
    assert (out / "trace.csv").exists()
    assert not (out / "trace_summary.json").exists()
    assert not (out / "trace.svg").exists()
