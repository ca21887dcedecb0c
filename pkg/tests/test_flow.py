import io

import numpy as np
import pytest

from confgeo import (IntegratorConfig, MetricField, cg_rhs,
                     conformal_pushforward, conformal_rescale, euclid_circle,
                     integrate_cg, integrate_cg_batch,
                     integrate_metric_geodesic, make_cg_state,
                     write_trace_csv)
from confgeo.checks import random_omega
from confgeo.errors import ConstraintViolation, MaxStepsExceeded, StepFailure
from confgeo.flow import conformal_arclength, validate_state


def test_cg_rhs_flat_circle(euclid):
    s = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                      normalize=False)
    dx, du, da = cg_rhs(euclid, s)
    assert np.allclose(dx, [1, 0, 0])
    assert np.allclose(du, [0, 1, 0])
    assert np.allclose(da, [-1, 0, 0])


def test_cg_rhs_flat_line_is_constant(euclid):
    s = make_cg_state(euclid, np.zeros(3), [1, 0, 0], None)
    _, du, da = cg_rhs(euclid, s)
    assert not np.any(du)
    assert not np.any(da)


def test_cg_rhs_sphere_zero_acc_is_geodesic(sphere):
    x = np.array([0.2, -0.1, 0.3])
    u = sphere.frame(x, [0.5, 1.0, 0.0])[0]
    s = make_cg_state(sphere, x, u, None)
    _, _, da = cg_rhs(sphere, s)
    assert np.max(np.abs(da)) < 1e-14  # L(u,u)u cancels L#u on Einstein space


def test_circle_oracle(euclid):
    s0 = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                       normalize=False)
    tr = integrate_cg(euclid, s0, 10.0)
    ts = np.linspace(0, 10, 1001)
    xs, us, _ = tr.eval_many(ts)
    ref = np.stack([np.sin(ts), 1 - np.cos(ts), np.zeros_like(ts)], axis=1)
    assert np.max(np.abs(xs - ref)) < 1e-8


def test_straight_line_exact(euclid):
    s0 = make_cg_state(euclid, np.zeros(3), [1, 0, 0], None)
    tr = integrate_cg(euclid, s0, 3.0)
    assert np.max(np.abs(tr.x[-1] - [3.0, 0, 0])) < 1e-12


def test_great_circle_equivalence(sphere):
    x0 = np.array([0.3, 0.0, 0.0])
    u0 = sphere.frame(x0, [0, 1, 0])[0]
    trc = integrate_cg(sphere, make_cg_state(sphere, x0, u0, None), 3.0)
    trg = integrate_metric_geodesic(sphere, x0, u0, 3.0)
    ts = np.linspace(0, 3, 301)
    xc, _, _ = trc.eval_many(ts)
    xg, _, _ = trg.eval_many(ts)
    assert np.max(np.abs(xc - xg)) < 1e-7


def test_geodesic_reaches_antipode(sphere):
    x0 = np.array([0.3, 0.0, 0.0])
    u0 = sphere.frame(x0, [0, 0, 1])[0]
    tr = integrate_metric_geodesic(sphere, x0, u0, np.pi)
    anti = -x0 / (x0 @ x0)
    assert np.linalg.norm(tr.x[-1] - anti) < 1e-6


def test_hyperbolic_norm_preserved(hyperbolic):
    x0 = np.array([0.1, 0.2, 0.0])
    u0 = hyperbolic.frame(x0, [1, 0, 0])[0]
    tr = integrate_metric_geodesic(hyperbolic, x0, u0, 5.0)
    assert tr.res_unit.max() < 1e-9


def test_trace_invariants(sphere):
    s0 = make_cg_state(sphere, [0.1, 0.0, 0.2], [1.0, 0.5, 0.0],
                       [0.0, 0.0, 0.8])
    tr = integrate_cg(sphere, s0, 5.0)
    assert np.all(np.diff(tr.t) > 0)
    assert tr.res_unit.max() < 1e-9 and tr.res_perp.max() < 1e-9
    s_mid = tr.eval(2.345)
    validate_state(sphere, s_mid, ctol=1e-7)


def test_euclid_circle_closed_form():
    p = np.zeros(3)
    u0 = np.array([1.0, 0, 0])
    a0 = np.array([0.0, 1, 0])
    assert np.allclose(euclid_circle(p, u0, a0, np.pi), [0.0, 2.0, 0.0])
    assert np.allclose(euclid_circle(p, u0, np.zeros(3), 3.0), [3.0, 0, 0])
    s = 0.7
    a = a0 / (2 * s)
    end = euclid_circle(p, u0, a, 2 * np.pi * s)
    assert np.allclose(end, 4 * s * a0, atol=1e-12)


def test_pushforward_constant(sphere):
    s = make_cg_state(sphere, [0.1, 0, 0], [1, 0, 0], [0, 0, 1])
    sh = conformal_pushforward(s, sphere, 2.0)
    assert np.allclose(sh.u, s.u / 2.0)
    assert np.allclose(sh.a, s.a / 4.0)


def test_pushforward_exp_factor(euclid):
    s = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                      normalize=False)
    sh = conformal_pushforward(s, euclid, "exp(x1)")
    assert np.allclose(sh.u, [1, 0, 0])
    assert np.allclose(sh.a, [0, 1, 0])


def test_conformal_invariance_single():
    M = MetricField.sphere(3)
    rng = np.random.default_rng(77)
    om = random_omega(rng)
    s0 = make_cg_state(M, [0.2, -0.1, 0.0], [1.0, 0.3, 0.0], [0.0, 0.0, 0.6])
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    tr = integrate_cg(M, s0, 2.0, cfg)
    that = conformal_arclength(tr, om)
    Mh = conformal_rescale(M, om)
    sh = conformal_pushforward(s0, M, om)
    trh = integrate_cg(Mh, sh, float(that[-1]), cfg)
    sel = np.linspace(0, len(tr.t) - 1, 25).astype(int)
    xh, _, _ = trh.eval_many(np.clip(that[sel], 0, trh.t_end))
    assert np.max(np.linalg.norm(xh - tr.x[sel], axis=1)) < 1e-6


def test_time_reversal(hyperbolic):
    s0 = make_cg_state(hyperbolic, [0.1, 0.0, 0.1], [1, 1, 0], [0, 0, 1.5])
    tr = integrate_cg(hyperbolic, s0, 2.0)
    se = tr.state(-1)
    back = make_cg_state(hyperbolic, se.x, -se.u, se.a, normalize=False)
    trb = integrate_cg(hyperbolic, back, 2.0)
    assert np.linalg.norm(trb.x[-1] - s0.x) < 1e-7


def test_convergence_order(euclid):
    s0 = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                       normalize=False)
    errs = []
    hs = [0.2, 0.1, 0.05]
    for h in hs:
        cfg = IntegratorConfig(rel_tol=1e9, abs_tol=1e9, max_step=h,
                               projection=False)
        tr = integrate_cg(euclid, s0, 10.0, cfg)
        ref = euclid_circle(np.zeros(3), np.array([1.0, 0, 0]),
                            np.array([0.0, 1, 0]), tr.t)
        errs.append(np.max(np.abs(tr.x - ref)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 4.0


def test_batch_matches_serial(sphere):
    rng = np.random.default_rng(1)
    states = []
    for _ in range(4):
        x = rng.uniform(-0.3, 0.3, 3)
        fr = sphere.frame(x, rng.normal(size=3))
        states.append(make_cg_state(sphere, x, fr[0], 0.5 * fr[1],
                                    normalize=False))
    bt = integrate_cg_batch(sphere,
                            np.array([s.x for s in states]),
                            np.array([s.u for s in states]),
                            np.array([s.a for s in states]), 5.0)
    ts = np.linspace(0, 5, 101)
    for i, s in enumerate(states):
        single = integrate_cg(sphere, s, 5.0)
        xb, _, _ = bt.view(i).eval_many(ts)
        xs, _, _ = single.eval_many(ts)
        assert np.max(np.abs(xb - xs)) < 1e-8


def test_invalid_initial_state_rejected(euclid):
    bad = make_cg_state(euclid, np.zeros(3), [2.0, 0, 0], [0, 1.0, 0],
                        normalize=False)
    with pytest.raises(ConstraintViolation):
        integrate_cg(euclid, bad, 1.0)


def test_chart_exit_is_step_failure(sphere):
    # a great circle from the chart origin passes through the stereographic
    # pole (chart infinity) at arc length pi; integration must fail, not wrap
    u0 = sphere.frame(np.zeros(3), [1, 0, 0])[0]
    with pytest.raises((StepFailure, MaxStepsExceeded)):
        integrate_metric_geodesic(sphere, np.zeros(3), u0, 3.2,
                                  IntegratorConfig(max_steps=30000))


def test_max_steps_exceeded(euclid):
    s0 = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                       normalize=False)
    with pytest.raises(MaxStepsExceeded):
        integrate_cg(euclid, s0, 100.0,
                     IntegratorConfig(max_step=1e-3, max_steps=200))


def test_csv_schema(euclid):
    s0 = make_cg_state(euclid, np.zeros(3), [1, 0, 0], [0, 1, 0],
                       normalize=False)
    tr = integrate_cg(euclid, s0, 1.0)
    buf = io.StringIO()
    write_trace_csv(tr, buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == "t,x1,x2,x3,u1,u2,u3,a1,a2,a3,res_unit,res_perp"
    assert len(lines) == len(tr.t) + 2  # header + rows + trailing newline
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert [float(v) for v in first[1:4]] == [0.0, 0.0, 0.0]
