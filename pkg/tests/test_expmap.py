import math

import numpy as np
import pytest

from confgeo import (IntegratorConfig, MetricField, cardioid_boundary,
                     dexp_zero, exp_cg, exp_cg_batch, f_functions,
                     heart_cross_section, heart_exit, injectivity_scan,
                     integrate_cg, make_cg_state, ray_image_angle,
                     remainder_order, trace_heart_boundary)
from confgeo.errors import (DegenerateDirection, MeshTooCoarse,
                            NoExitWithinTrace, ResolutionTooCoarse,
                            ZeroVector)

P = np.zeros(3)
U0 = np.array([1.0, 0, 0])
AHAT = np.array([0.0, 1, 0])


# -- the map -----------------------------------------------------------------

def test_exp_zero_returns_base(euclid):
    assert np.array_equal(exp_cg(euclid, P, U0, np.zeros(3)), P)


def test_exp_axis_is_line(euclid):
    s = 0.7
    out = exp_cg(euclid, P, U0, s * U0)
    assert np.allclose(out, [2 * np.pi * s, 0, 0], atol=1e-9)


def test_exp_half_turn(euclid):
    s = 0.4
    A = s * (math.cos(math.pi / 6) * U0 + math.sin(math.pi / 6) * AHAT)
    out = exp_cg(euclid, P, U0, A)
    assert np.allclose(out, 4 * s * AHAT, atol=1e-9)


def test_reflection_symmetry(sphere):
    p = np.array([0.2, 0.0, -0.1])
    fr = sphere.frame(p, [1.0, 0.4, 0.0])
    u0, ahat = fr[0], fr[1]
    rng = np.random.default_rng(13)
    g = sphere.metric(p)
    for _ in range(6):
        theta = rng.uniform(0.2, 1.4)
        mag = rng.uniform(0.05, 0.3)
        A = mag * (math.cos(theta) * u0 + math.sin(theta) * ahat)
        Ar = A - 2 * float(A @ g @ u0) * u0
        assert np.linalg.norm(exp_cg(sphere, p, u0, A)
                              - exp_cg(sphere, p, u0, Ar)) < 1e-7


def test_domain_ball_membership(sphere):
    from confgeo.expmap import DomainBall
    p = np.array([0.2, 0.0, 0.0])
    u0 = sphere.frame(p, [1.0, 0, 0])[0]
    ball = DomainBall(sphere, p, u0, 0.4)
    g = sphere.metric(p)
    rng = np.random.default_rng(21)
    center = 0.4 * u0
    for _ in range(50):
        A = rng.uniform(-1, 1, 3)
        diff = A - center
        inside = float(diff @ g @ diff) < 0.4 ** 2
        assert ball.contains(A) == inside
        if inside:
            assert float(A @ g @ u0) > 0  # members sit strictly ahead of p
    assert not ball.contains(np.zeros(3))  # the origin is a boundary point


def test_ray_coords_roundtrip(sphere):
    from confgeo.expmap import ray_coords
    p = np.array([0.1, -0.2, 0.0])
    fr = sphere.frame(p, [0.3, 1.0, 0.2])
    u0 = fr[0]
    A = 0.7 * (math.cos(0.9) * u0 + math.sin(0.9) * fr[2])
    rc = ray_coords(sphere, p, u0, A)
    assert rc.mag == pytest.approx(0.7)
    assert rc.theta == pytest.approx(0.9)
    rebuilt = rc.mag * (math.cos(rc.theta) * u0 + math.sin(rc.theta) * rc.ahat)
    assert np.allclose(rebuilt, A)
    axial = ray_coords(sphere, p, u0, 0.5 * u0)
    assert axial.theta == 0.0 and axial.ahat is None
    with pytest.raises(ZeroVector):
        ray_coords(sphere, p, u0, np.zeros(3))


# -- derivative at zero --------------------------------------------------------

def test_dexp_axis_limit(euclid):
    out = dexp_zero(euclid, P, U0, 0.5 * U0)
    assert np.allclose(out, np.pi * U0, atol=1e-14)


def test_dexp_pi_sixth(euclid):
    A = math.cos(math.pi / 6) * U0 + math.sin(math.pi / 6) * AHAT
    assert np.allclose(dexp_zero(euclid, P, U0, A), 4 * AHAT, atol=1e-14)


def test_dexp_degenerate_direction_vanishes(euclid):
    assert np.linalg.norm(dexp_zero(euclid, P, U0, 0.8 * AHAT)) < 1e-14


def test_dexp_zero_vector_rejected(euclid):
    with pytest.raises(ZeroVector):
        dexp_zero(euclid, P, U0, np.zeros(3))


def test_dexp_fd_agreement(sphere):
    p = np.array([0.2, 0.1, -0.1])
    fr = sphere.frame(p, [1.0, 0.2, 0.0])
    u0, ahat = fr[0], fr[1]
    h = 1e-4
    cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    for theta in (0.0, 0.5, 1.0, 1.5):
        A = math.cos(theta) * u0 + math.sin(theta) * ahat
        probes = exp_cg_batch(sphere, p, u0,
                              np.stack([h * A, 0.5 * h * A]), cfg)
        fd = 2 * (probes[1] - p) / (0.5 * h) - (probes[0] - p) / h
        assert np.linalg.norm(fd - dexp_zero(sphere, p, u0, A)) < 1e-4


# -- ray angles -----------------------------------------------------------------

def test_ray_angle_values(euclid):
    assert abs(ray_image_angle(euclid, P, U0, AHAT, math.pi / 6)
               - math.pi / 2) < 1e-6
    assert ray_image_angle(euclid, P, U0, AHAT, 0.0) < 1e-6


def test_ray_angle_sphere(sphere):
    p = np.array([0.2, 0.1, -0.1])
    fr = sphere.frame(p, [1.0, 0.0, 0.3])
    ang = ray_image_angle(sphere, p, fr[0], fr[1], math.pi / 6, h=1e-3)
    assert abs(ang - math.pi / 2) < 5e-3


def test_ray_angle_degenerate(euclid):
    with pytest.raises(DegenerateDirection):
        ray_image_angle(euclid, P, U0, AHAT, math.pi / 2)


# -- f functions ---------------------------------------------------------------

def test_f_limits_at_zero():
    f1, f2, f3 = f_functions(0.0)
    assert (f1, f3) == (math.pi, math.pi**2)
    assert abs(f2 - math.pi**2) < 1e-12


def test_f_at_pi_half():
    f1, f2, f3 = f_functions(math.pi / 2)
    assert abs(f1) < 1e-10 and abs(f3) < 1e-10
    assert abs(f2 - math.pi) < 1e-10


def test_f_positive_on_grid():
    f1, f2, f3 = f_functions(np.linspace(0, 1.4, 57))
    assert f1.min() > 0 and f2.min() > 0 and f3.min() > 0


def test_f_series_direct_crossover():
    # values straddling the series switch at sin(theta) = 1e-3 must agree
    for s in (5e-4, 2e-3):
        theta = math.asin(s)
        _, f2, _ = f_functions(theta)
        assert abs(f2 - math.pi**2) < 1e-4


# -- injectivity scans -----------------------------------------------------------

def test_scan_euclid_capped(euclid):
    scan = injectivity_scan(euclid, P, U0, 3.0, 8)
    assert scan.est_r == 0.5
    assert scan.collision is None


def test_scan_too_coarse(euclid):
    with pytest.raises(ResolutionTooCoarse):
        injectivity_scan(euclid, P, U0, 1.0, 1)


def test_scan_sphere_collision_and_monotonicity(sphere):
    p = np.array([0.1, 0.0, 0.0])
    u0 = sphere.frame(p, [0, 0, 1.0])[0]
    scan = injectivity_scan(sphere, p, u0, 1.0, 6, n_r=8)
    assert 0.0 < scan.est_r <= 0.5
    if scan.collision is not None:
        w = scan.collision
        assert w.image_distance <= scan.delta_img
        assert w.domain_distance > 0.1 * w.r
    # shrinking delta_img cannot shrink the collision-free radius
    scan2 = injectivity_scan(sphere, p, u0, 1.0, 6, n_r=8, delta_img=5e-5)
    assert scan2.est_r >= scan.est_r


# -- hearts ---------------------------------------------------------------------

def test_heart_requires_resolution(euclid):
    with pytest.raises(ResolutionTooCoarse):
        trace_heart_boundary(euclid, P, U0, 0.5, 2)


def test_heart_chord_bound(euclid):
    # at low resolution the far-pole fan chords exceed the configured bound
    with pytest.raises(MeshTooCoarse):
        trace_heart_boundary(euclid, P, U0, 0.5, 6)


def test_heart_cusp_and_far_pole(euclid_heart):
    H = euclid_heart
    assert np.array_equal(H.mesh.vertices[H.cusp_index], P)
    far = H.mesh.vertices[H.far_index]
    assert np.allclose(far, [4 * np.pi * 0.5, 0, 0], atol=1e-8)


def test_heart_vertices_are_exp_images(euclid_heart):
    H = euclid_heart
    idx = [1, 57, 301, H.far_index]
    pts = exp_cg_batch(MetricField.euclidean(3), H.p, H.u0, H.domain[idx])
    assert np.max(np.abs(pts - H.mesh.vertices[idx])) < 1e-8


def test_cross_section_matches_cardioid(euclid):
    cs = heart_cross_section(euclid, P, U0, AHAT, 0.5, 360)
    dev = np.abs(cs.rho - cardioid_boundary(0.5, cs.phi))
    assert dev.max() < 1e-6


def test_cusp_tangents_approach_minus_u0(euclid):
    # one-sided boundary directions near the cusp converge to -u0 on both sides
    r = 0.5
    betas = np.array([-0.08, -0.04, -0.02, 0.02, 0.04, 0.08])
    A = (r * (1 - np.cos(betas))[:, None] * U0
         + r * np.sin(betas)[:, None] * AHAT)
    pts = exp_cg_batch(MetricField.euclidean(3), P, U0, A)
    dirs = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    ang = np.arccos(np.clip(dirs @ (-U0), -1, 1))
    assert ang[2] < ang[1] < ang[0]         # left branch tightening
    assert ang[3] < ang[4] < ang[5]         # right branch tightening
    assert max(ang[2], ang[3]) < 0.35
    # the two one-sided directions approach each other
    gap_far = np.linalg.norm(dirs[0] - dirs[5])
    gap_near = np.linalg.norm(dirs[2] - dirs[3])
    assert gap_near < gap_far


# -- cardioid oracle --------------------------------------------------------------

def test_cardioid_values():
    assert cardioid_boundary(1.0, math.pi) == 0.0
    assert abs(cardioid_boundary(1.0, math.pi / 2) - 4 * math.sqrt(3)) < 1e-12
    assert abs(cardioid_boundary(1.0, 1e-12) - 4 * math.pi) < 1e-9
    with pytest.raises(ValueError):
        cardioid_boundary(1.0, 4.0)


# -- heart exit -------------------------------------------------------------------

def test_exit_axis_line(euclid, euclid_heart):
    s0 = make_cg_state(euclid, P, U0, None)
    tr = integrate_cg(euclid, s0, 8.0)
    ex = heart_exit(euclid, tr, euclid_heart)
    assert abs(ex.t_exit - 2 * np.pi) < 1e-4
    assert not ex.within_two_pi_r     # the axis line realizes the 4*pi*r bound
    assert ex.within_four_pi_r


def test_exit_unit_acceleration(euclid, euclid_heart):
    s0 = make_cg_state(euclid, P, U0, AHAT, normalize=False)
    tr = integrate_cg(euclid, s0, 8.0)
    ex = heart_exit(euclid, tr, euclid_heart)
    assert abs(ex.t_exit - 2 * np.pi / math.sqrt(2)) < 1e-4


def test_exit_truncated_trace(euclid, euclid_heart):
    s0 = make_cg_state(euclid, P, U0, AHAT, normalize=False)
    tr = integrate_cg(euclid, s0, 1.0)
    with pytest.raises(NoExitWithinTrace):
        heart_exit(euclid, tr, euclid_heart)


def test_exit_domain_relation(euclid, euclid_heart):
    # |A| at the exit satisfies |A| = 2 r cos(theta), theta = pi/2 - psi/2
    s0 = make_cg_state(euclid, P, U0, 0.5 * AHAT, normalize=False)
    tr = integrate_cg(euclid, s0, 8.0)
    ex = heart_exit(euclid, tr, euclid_heart)
    r = euclid_heart.r
    a_mag = 0.5
    expected_A = 2 * r / math.sqrt(1 + (2 * r * a_mag) ** 2)
    assert abs(ex.t_exit - 2 * np.pi * expected_A) < 1e-4
    theta = math.pi / 2 - ex.psi / 2
    assert abs(2 * r * math.cos(theta) - expected_A) < 1e-3


# -- remainder order --------------------------------------------------------------

def test_remainder_flat_degenerate(euclid):
    fit = remainder_order(euclid, P, U0, math.pi / 4)
    assert fit.degenerate
    assert fit.residuals.max() < 1e-9


def test_remainder_sphere_cubic(sphere):
    p = np.array([0.2, 0.1, -0.1])
    fit = remainder_order(sphere, p, sphere.frame(p, [1, 0, 0])[0],
                          math.pi / 4)
    assert not fit.degenerate
    assert fit.slope >= 2.7


def test_remainder_hyperbolic_cubic(hyperbolic):
    p = np.array([0.1, 0.0, 0.2])
    fit = remainder_order(hyperbolic, p, hyperbolic.frame(p, [1, 0, 0])[0],
                          math.pi / 6)
    assert not fit.degenerate
    assert fit.slope >= 2.7
