"""Conformal exponential map, heart boundaries, and their oracles.

The map sends a tangent vector A at (p, u0) to the point reached by the
conformal geodesic with initial acceleration A_perp / |A|^2 after arc length
2 pi |A| (and to p itself for A = 0).  Its domain of injectivity is an open
ball C(u0, r) in T_pM tangent to the origin with inward normal u0, realized
concretely as the ball centered at r*u0.  The image of C(u0, r) has
heart-shaped cross-sections with a cusp at p; in flat space the cross-section
boundary is the closed-form cardioid-like curve implemented in
:func:`cardioid_boundary`.

Heart boundaries are meshed in geodesic polar coordinates on the domain
sphere dC(u0, r) with the cusp as a mesh pole.  The polar angle psi runs from
0 (cusp, A = 0) to pi (far pole, A = 2 r u0); a point at angle psi has
|A| = 2 r sin(psi/2) and makes the angle theta = pi/2 - psi/2 with u0.
Directions with theta = pi/2 are degenerate (the derivative of the map
vanishes there), so scans stop short of them.

Mesh construction and scans evaluate the map in vectorized batches.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateDirection, MeshTooCoarse, NoExitWithinTrace,
                     ResolutionTooCoarse, ZeroVector)
from .flow import (IntegratorConfig, Trace, integrate_cg_batch)
from .geodesy import metric_exp
from .mesh import TriangleMesh
from .metricfield import MetricField

#: directions with theta above this are excluded from scans (the derivative
#: of the map degenerates as theta -> pi/2)
THETA_SCAN_MAX = 1.47

_EXP_CFG = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)


def _check_unit(M, p, u0, tol=1e-8):
    g = M.metric(p)
    nu = float(u0 @ g @ u0)
    if abs(nu - 1.0) > tol:
        raise ValueError(f"u0 must be g-unit at p (got |u0|^2 = {nu:.12g})")
    return g


@dataclass(frozen=True)
class DomainBall:
    """The open ball C(u0, r) in T_pM, centered at r*u0.

    Its boundary passes through the origin with inward normal u0; every
    member A has g(A, u0) > 0, with A = 0 sitting on the boundary.
    """

    metric: MetricField
    p: np.ndarray
    u0: np.ndarray
    r: float

    def contains(self, A) -> np.ndarray:
        """Strict membership |A - r u0|_g < r, i.e. |A|^2 < 2 r g(A, u0)."""
        A2 = np.atleast_2d(np.asarray(A, dtype=float))
        g = self.metric.metric(self.p)
        norm2 = np.einsum('bi,ij,bj->b', A2, g, A2)
        par = A2 @ g @ self.u0
        out = norm2 < 2.0 * self.r * par
        return out if np.asarray(A).ndim == 2 else bool(out[0])


@dataclass(frozen=True)
class RayCoords:
    """Polar data of a tangent vector: |A|, the angle theta to u0, and the
    unit perpendicular direction (undefined for theta = 0)."""

    mag: float
    theta: float
    ahat: np.ndarray | None


def ray_coords(M: MetricField, p, u0, A) -> RayCoords:
    """Decompose A as |A| (cos(theta) u0 + sin(theta) ahat) under g at p."""
    g = _check_unit(M, p, u0)
    A = np.asarray(A, dtype=float)
    mag = math.sqrt(max(float(A @ g @ A), 0.0))
    if mag == 0.0:
        raise ZeroVector("ray coordinates are undefined for A = 0")
    apar = float(A @ g @ u0)
    Aperp = A - apar * u0
    perp = math.sqrt(max(float(Aperp @ g @ Aperp), 0.0))
    if perp <= 1e-12 * mag:
        return RayCoords(mag, 0.0 if apar > 0 else math.pi, None)
    return RayCoords(mag, math.atan2(perp, apar), Aperp / perp)


# ---------------------------------------------------------------------------
# the map and its derivative at zero
# ---------------------------------------------------------------------------

def exp_cg(M: MetricField, p, u0, A, cfg: IntegratorConfig | None = None):
    """Conformal exponential of a single tangent vector A at (p, u0)."""
    return exp_cg_batch(M, p, u0, np.asarray(A, dtype=float)[None, :], cfg)[0]


def exp_cg_batch(M: MetricField, p, u0, A, cfg: IntegratorConfig | None = None):
    """Vectorized conformal exponential of rows of A (shape (B, d))."""
    cfg = cfg or _EXP_CFG
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    g = _check_unit(M, p, u0)
    B = A.shape[0]
    out = np.empty((B, M.d))
    apar = A @ g @ u0
    Aperp = A - apar[:, None] * u0
    norm2 = np.einsum('bi,ij,bj->b', A, g, A)
    zero = norm2 < 1e-28
    out[zero] = p
    if np.any(~zero):
        idx = np.flatnonzero(~zero)
        a0 = Aperp[idx] / norm2[idx, None]
        t_end = 2.0 * np.pi * np.sqrt(norm2[idx])
        X0 = np.broadcast_to(p, (len(idx), M.d))
        U0 = np.broadcast_to(u0, (len(idx), M.d))
        bt = integrate_cg_batch(M, X0, U0, a0, t_end, cfg,
                                store=False, validate=False)
        out[idx] = bt.Y[-1, :, :M.d]
    return out


def dexp_zero(M: MetricField, p, u0, A):
    """Directional derivative of the map at A = 0 (closed form).

    Continuous limit 2 pi |A| u0 as A_perp -> 0; vanishes identically for
    directions perpendicular to u0.
    """
    g = _check_unit(M, p, u0)
    A = np.asarray(A, dtype=float)
    norm = math.sqrt(max(float(A @ g @ A), 0.0))
    if norm == 0.0:
        raise ZeroVector("dexp is not defined for A = 0")
    apar = float(A @ g @ u0)
    Aperp = A - apar * u0
    perp = math.sqrt(max(float(Aperp @ g @ Aperp), 0.0))
    rho = perp / norm
    out = 2.0 * math.pi * norm * np.sinc(2.0 * rho) * u0
    if perp > 0.0:
        out = out + (2.0 * math.pi**2 * norm * rho * np.sinc(rho) ** 2
                     ) * (Aperp / perp)
    return out


def ray_image_angle(M: MetricField, p, u0, ahat, theta0: float,
                    h: float = 1e-3, cfg: IntegratorConfig | None = None) -> float:
    """Angle at p between u0 and the image of the ray with angle theta0.

    Estimated from two probe points with Richardson extrapolation; converges
    to pi*sin(theta0) as h -> 0.
    """
    if not 0.0 <= theta0 < math.pi / 2:
        raise DegenerateDirection(
            f"theta0 must lie in [0, pi/2); got {theta0:g}")
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    ahat = np.asarray(ahat, dtype=float)
    g = _check_unit(M, p, u0)
    direction = math.cos(theta0) * u0 + math.sin(theta0) * ahat
    probes = exp_cg_batch(M, p, u0,
                          np.stack([h * direction, 0.5 * h * direction]),
                          cfg or IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13))
    t1 = (probes[0] - p) / h
    t2 = (probes[1] - p) / (0.5 * h)
    T = 2.0 * t2 - t1
    nT = math.sqrt(float(T @ g @ T))
    if nT < 1e-12:
        raise DegenerateDirection("image tangent vanished; theta0 too close to pi/2")
    c = float(T @ g @ u0) / nT
    return math.acos(min(1.0, max(-1.0, c)))


def f_functions(theta):
    """The wedge-derivative norms (f1, f2, f3) at |A| = 0.

    f1 = sin(pi sin t)/sin t, f3 = f1^2, and
    f2 = sqrt(sin^2(pi s)/s^4 + pi^2/s^2 - pi sin(2 pi s)/s^3) with s = sin t,
    evaluated through a series below s = 1e-3 where the direct form cancels.
    """
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    f1 = np.pi * np.sinc(s)
    f3 = f1 * f1
    small = np.abs(s) < 1e-3
    s_safe = np.where(small, 1.0, s)
    direct = (np.sin(np.pi * s_safe) ** 2 / s_safe**4
              + np.pi**2 / s_safe**2
              - np.pi * np.sin(2.0 * np.pi * s_safe) / s_safe**3)
    series = np.pi**4 - (2.0 * np.pi**6 / 9.0) * s**2
    f2 = np.sqrt(np.where(small, series, np.maximum(direct, 0.0)))
    if theta.ndim == 0:
        return float(f1), float(f2), float(f3)
    return f1, f2, f3


# ---------------------------------------------------------------------------
# injectivity scan
# ---------------------------------------------------------------------------

@dataclass
class CollisionWitness:
    domain_a: np.ndarray
    domain_b: np.ndarray
    image_a: np.ndarray
    image_b: np.ndarray
    domain_distance: float
    image_distance: float
    r: float


@dataclass
class InjectivityScan:
    est_r: float            # 1/2 * min(1, largest collision-free r)
    clean_r: float          # largest scanned r without collisions
    r_schedule: np.ndarray
    collision: CollisionWitness | None
    n_points: int
    delta_sep: float        # absolute separation threshold used (frac * r)
    delta_img: float

    def to_dict(self):
        out = {"est_r": self.est_r, "clean_r": self.clean_r,
               "r_schedule": list(self.r_schedule), "n_points": self.n_points,
               "delta_sep": self.delta_sep, "delta_img": self.delta_img,
               "collision": None}
        if self.collision is not None:
            c = self.collision
            out["collision"] = {
                "domain_a": list(c.domain_a), "domain_b": list(c.domain_b),
                "image_a": list(c.image_a), "image_b": list(c.image_b),
                "domain_distance": c.domain_distance,
                "image_distance": c.image_distance, "r": c.r}
        return out


def _transverse_directions(frame, n_az):
    """Unit transverse directions: the (e1, e2) circle plus remaining axes."""
    d = frame.shape[0]
    angles = 2.0 * np.pi * np.arange(n_az) / n_az
    dirs = (np.cos(angles)[:, None] * frame[1]
            + np.sin(angles)[:, None] * frame[2])
    if d > 3:
        extra = np.concatenate([frame[3:], -frame[3:]], axis=0)
        dirs = np.concatenate([dirs, extra], axis=0)
    return dirs


def _leading_images(p, u0, g, A):
    """Closed-form leading-order images p + D(exp)_0(A), vectorized.

    Exact in flat space; the scan uses these to tell genuine curvature
    folding apart from the derivative degeneracy near theta = pi/2, which
    compresses images without any loss of injectivity.
    """
    apar = A @ g @ u0
    Aperp = A - apar[:, None] * u0
    norm = np.sqrt(np.maximum(np.einsum('bi,ij,bj->b', A, g, A), 0.0))
    perp = np.sqrt(np.maximum(np.einsum('bi,ij,bj->b', Aperp, g, Aperp), 0.0))
    safe = np.where(norm > 0, norm, 1.0)
    rho = perp / safe
    cu = 2.0 * np.pi * norm * np.sinc(2.0 * rho)
    ca = 2.0 * np.pi**2 * norm * rho * np.sinc(rho) ** 2
    ahat = np.where(perp[:, None] > 0, Aperp / np.where(perp > 0, perp, 1.0)[:, None], 0.0)
    return p + cu[:, None] * u0 + ca[:, None] * ahat


def injectivity_scan(M: MetricField, p, u0, r_max: float, resolution: int,
                     *, delta_img: float = 1e-4, delta_sep_frac: float = 0.1,
                     n_r: int = 16, theta_max: float = THETA_SCAN_MAX,
                     min_samples: int = 16,
                     cfg: IntegratorConfig | None = None) -> InjectivityScan:
    """Scan C(u0, r) for image collisions over r up to r_max.

    A collision is a pair of grid points at mutual domain distance greater
    than ``delta_sep_frac * r`` whose images lie within ``delta_img`` in chart
    coordinates.  Returns est_r = 1/2 * min(1, largest collision-free r).
    """
    if resolution < 2:
        raise ResolutionTooCoarse(f"resolution {resolution} < 2")
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    frame = M.frame(p, u0)
    n_theta = resolution
    n_mag = resolution
    n_az = max(4, resolution // 2)
    thetas = np.linspace(0.0, theta_max, n_theta)
    dirs = _transverse_directions(frame, n_az)
    # geometric magnitude spacing keeps every scheduled radius populated
    fracs = np.geomspace(min(0.5 / n_r, 0.1), 0.995, n_mag)
    A_list, coeff_list = [], []
    for th in thetas:
        mags = fracs * 2.0 * r_max * math.cos(th)
        if th == 0.0:
            for m in mags:
                A_list.append(m * u0)
                coeff_list.append((m, math.cos(th)))
        else:
            for v in dirs:
                direction = math.cos(th) * u0 + math.sin(th) * v
                for m in mags:
                    A_list.append(m * direction)
                    coeff_list.append((m, math.cos(th)))
    A = np.array(A_list)
    mags = np.array([c[0] for c in coeff_list])
    cosines = np.array([c[1] for c in coeff_list])
    g = M.metric(p)
    images = exp_cg_batch(M, p, u0, A, cfg)
    leading = _leading_images(p, u0, g, A)

    r_schedule = r_max * np.arange(1, n_r + 1) / n_r
    clean_r = 0.0
    collision = None
    for r in r_schedule:
        mask = mags < 2.0 * r * cosines
        n_in = int(mask.sum())
        if n_in < min_samples:
            raise ResolutionTooCoarse(
                f"only {n_in} grid points inside C(u0, {r:g}); "
                f"need at least {min_samples}")
        idx = np.flatnonzero(mask)
        tree = cKDTree(images[idx])
        pairs = sorted(tree.query_pairs(delta_img))
        delta_sep = delta_sep_frac * r
        found = None
        for i, j in pairs:
            gi, gj = idx[i], idx[j]
            diff = A[gi] - A[gj]
            dd = math.sqrt(float(diff @ g @ diff))
            if dd <= delta_sep:
                continue
            # genuine folding: the leading-order model predicts a visible gap
            pred = float(np.linalg.norm(leading[gi] - leading[gj]))
            if pred > 3.0 * delta_img:
                found = (gi, gj, dd)
                break
        if found is not None:
            gi, gj, dd = found
            collision = CollisionWitness(
                A[gi].copy(), A[gj].copy(), images[gi].copy(),
                images[gj].copy(), dd,
                float(np.linalg.norm(images[gi] - images[gj])), float(r))
            break
        clean_r = float(r)
    return InjectivityScan(0.5 * min(1.0, clean_r), clean_r, r_schedule,
                           collision, len(A), delta_sep_frac * r_max, delta_img)


# ---------------------------------------------------------------------------
# heart boundary meshes
# ---------------------------------------------------------------------------

@dataclass
class HeartSample:
    """Meshed image of dC(u0, r) under the conformal exponential map."""

    metric: MetricField
    p: np.ndarray
    u0: np.ndarray
    r: float
    frame: np.ndarray          # rows u0, e1, e2
    mesh: TriangleMesh
    domain: np.ndarray         # (V, d) mesh A-vectors
    psis: np.ndarray           # (V,) polar angle from the cusp
    phis: np.ndarray           # (V,) azimuth
    cusp_index: int
    far_index: int
    boundary_tol: float
    n_psi: int
    n_phi: int
    cfg: IntegratorConfig = field(default_factory=lambda: _EXP_CFG)

    def domain_vector(self, psi, phi):
        u0, e1, e2 = self.frame[0], self.frame[1], self.frame[2]
        r = self.r
        return (r * (1.0 - np.cos(psi)) * u0
                + r * np.sin(psi) * (np.cos(phi) * e1 + np.sin(phi) * e2))

    def boundary_points(self, psis, phis):
        """Exact boundary points exp(A(psi, phi)) away from the mesh facets."""
        A = np.array([self.domain_vector(ps, ph) for ps, ph in zip(psis, phis)])
        return exp_cg_batch(self.metric, self.p, self.u0, A, self.cfg)

    def contains(self, points, closed: bool = False):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.mesh.contains(pts)
        if closed:
            near = self.mesh.distance(pts) <= self.boundary_tol
            inside = inside | near
        return inside

    def to_dict(self):
        return {
            "p": list(self.p), "u0": list(self.u0), "r": self.r,
            "n_psi": self.n_psi, "n_phi": self.n_phi,
            "cusp_index": self.cusp_index, "far_index": self.far_index,
            "boundary_tol": self.boundary_tol,
            "vertices": self.mesh.vertices.tolist(),
            "faces": self.mesh.faces.tolist(),
            "domain": self.domain.tolist(),
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)


def trace_heart_boundary(M: MetricField, p, u0, r: float, resolution: int,
                         *, n_phi: int | None = None,
                         cfg: IntegratorConfig | None = None,
                         chord_frac: float = 0.35,
                         n_probe: int = 24) -> HeartSample:
    """Mesh the image of dC(u0, r) with the cusp as a mesh pole.

    ``resolution`` is the number of psi intervals; the azimuth count defaults
    to 2*resolution.  The mesh must stay within the configured chord bound
    (adjacent image points within ``chord_frac`` of the heart diameter) or
    MeshTooCoarse is raised.  d = 3 only: containment queries ray-cast a
    triangle mesh.
    """
    if M.d != 3:
        raise ValueError("heart meshes require d = 3 (triangle-mesh queries)")
    if resolution < 4:
        raise ResolutionTooCoarse(f"resolution {resolution} < 4")
    if r <= 0:
        raise ValueError("r must be positive")
    cfg = cfg or _EXP_CFG
    n_psi = int(resolution)
    n_phi = int(n_phi or 2 * n_psi)
    if n_phi < 6:
        raise ResolutionTooCoarse(f"n_phi {n_phi} < 6")
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    frame = M.frame(p, u0)
    u0 = frame[0]

    psis_ring = np.pi * np.arange(1, n_psi) / n_psi
    phis_ring = 2.0 * np.pi * np.arange(n_phi) / n_phi
    V = 1 + (n_psi - 1) * n_phi + 1
    psis = np.empty(V)
    phis = np.empty(V)
    domain = np.empty((V, 3))
    psis[0], phis[0] = 0.0, 0.0
    domain[0] = 0.0
    k = 1
    for ps in psis_ring:
        for ph in phis_ring:
            psis[k], phis[k] = ps, ph
            domain[k] = (r * (1.0 - np.cos(ps)) * u0
                         + r * np.sin(ps) * (np.cos(ph) * frame[1]
                                             + np.sin(ph) * frame[2]))
            k += 1
    far = V - 1
    psis[far], phis[far] = np.pi, 0.0
    domain[far] = 2.0 * r * u0

    vertices = np.empty((V, 3))
    vertices[0] = p
    vertices[1:] = exp_cg_batch(M, p, u0, domain[1:], cfg)

    def rid(i, j):
        return 1 + i * n_phi + (j % n_phi)

    faces = []
    for j in range(n_phi):
        faces.append([0, rid(0, j), rid(0, j + 1)])
    for i in range(n_psi - 2):
        for j in range(n_phi):
            a, b = rid(i, j), rid(i, j + 1)
            c, dd = rid(i + 1, j + 1), rid(i + 1, j)
            faces.append([a, b, c])
            faces.append([a, c, dd])
    for j in range(n_phi):
        faces.append([far, rid(n_psi - 2, j + 1), rid(n_psi - 2, j)])
    tri = TriangleMesh(vertices, np.array(faces))

    # chord bound: adjacent image points within a fraction of the diameter
    diam = float(np.linalg.norm(np.ptp(vertices, axis=0)))
    max_chord = tri.max_edge_length()
    if max_chord > chord_frac * diam:
        raise MeshTooCoarse(
            f"max image chord {max_chord:g} exceeds {chord_frac:g} * diameter "
            f"{diam:g}; increase the resolution")

    # facet sag calibration: probe true boundary points at cell centers
    probe_ps = np.linspace(np.pi / (2 * n_psi), np.pi * (1 - 0.5 / n_psi),
                           n_probe)
    probe_ph = (2.0 * np.pi * (np.arange(n_probe) + 0.37) / n_probe
                + np.pi / n_phi)
    sample = HeartSample(M, p, u0, r, frame, tri, domain, psis, phis,
                         0, far, 0.0, n_psi, n_phi, cfg)
    probes = sample.boundary_points(probe_ps, probe_ph)
    sag = float(tri.distance(probes).max())
    sample.boundary_tol = max(2.0 * sag, 1e-8)
    return sample


# ---------------------------------------------------------------------------
# cross-sections and the flat-space oracle
# ---------------------------------------------------------------------------

@dataclass
class CrossSection:
    """In-plane boundary curve of a heart in the (u0, e1) half-planes."""

    beta: np.ndarray     # circle parameter in (-pi, pi], 0 = cusp (excluded)
    domain: np.ndarray   # (N, d)
    points: np.ndarray   # (N, d) images
    rho: np.ndarray      # chart polar radius around p
    phi: np.ndarray      # chart polar angle from u0 (signed toward +/- e1)


def heart_cross_section(M: MetricField, p, u0, ahat, r: float, n: int,
                        cfg: IntegratorConfig | None = None) -> CrossSection:
    """Boundary points of the cross-section through span(u0, ahat)."""
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    ahat = np.asarray(ahat, dtype=float)
    beta = np.linspace(-np.pi, np.pi, n + 1)[1:]
    beta = beta[np.abs(beta) > 1e-12]
    A = (r * (1.0 - np.cos(beta))[:, None] * u0
         + r * np.sin(beta)[:, None] * ahat)
    pts = exp_cg_batch(M, p, u0, A, cfg or _EXP_CFG)
    rel = pts - p
    # chart-orthonormal axes spanning the (u0, ahat) plane
    b1 = u0 / np.linalg.norm(u0)
    b2 = ahat - (ahat @ b1) * b1
    b2 = b2 / np.linalg.norm(b2)
    rho = np.linalg.norm(rel, axis=1)
    phi = np.arctan2(rel @ b2, rel @ b1)
    return CrossSection(beta, A, pts, rho, phi)


def cardioid_boundary(R: float, phi):
    """Flat-space heart cross-section radius r(phi) = 4R sqrt(pi^2-phi^2) sin(phi)/phi.

    Defined for phi in (-pi, pi] with the limit 4*pi*R at phi = 0 and the
    cusp value 0 at phi = pi.
    """
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr <= -np.pi - 1e-12) or np.any(phi_arr > np.pi + 1e-12):
        raise ValueError("phi must lie in (-pi, pi]")
    phi_c = np.clip(phi_arr, -np.pi, np.pi)
    val = 4.0 * R * np.sqrt(np.maximum(np.pi**2 - phi_c**2, 0.0)) \
        * np.sinc(phi_c / np.pi)
    return float(val) if phi_arr.ndim == 0 else val


# ---------------------------------------------------------------------------
# heart exit detection
# ---------------------------------------------------------------------------

@dataclass
class HeartExit:
    t_exit: float
    point: np.ndarray
    psi: float
    phi: float
    within_two_pi_r: bool    # whether the tighter 2*pi*r arc bound held
    within_four_pi_r: bool   # the bound implied by |A| <= 2r on the boundary
    refined: bool            # smooth-surface refinement converged


def heart_exit(M: MetricField, trace: Trace, H: HeartSample,
               *, start_tol: float = 1e-6) -> HeartExit:
    """First arc length at which the trace crosses the heart boundary.

    The crossing is bracketed by mesh-parity sign change along the trace and
    then refined against the smooth parametric boundary, so the result is
    limited by the integrator rather than the facets.  Raises
    NoExitWithinTrace if the trace ends inside H.
    """
    if np.linalg.norm(trace.x[0] - H.p) > start_tol:
        raise ValueError("trace does not start at the heart's base point")
    g = M.metric(H.p)
    cu = float(trace.u[0] @ g @ H.u0)
    if cu < 1.0 - 1e-6:
        raise ValueError("trace tangent at p does not match the heart direction")

    # march along nodes densified to the heart scale so short excursions
    # through the boundary are not stepped over
    scale_t = H.r / 2.0
    ts = trace.t
    if len(ts) > 1 and float(np.max(np.diff(ts))) > scale_t:
        uniform = np.linspace(ts[0], ts[-1],
                              int(np.ceil(trace.t_end / scale_t)) + 1)
        ts = np.unique(np.concatenate([ts, uniform]))
    pts, _, _ = trace.eval_many(ts)
    dist = H.mesh.distance(pts)
    inside = H.mesh.contains(pts)
    definite = dist > H.boundary_tol
    out_idx = None
    seen_inside = False
    for i in range(1, len(pts)):
        if definite[i] and inside[i]:
            seen_inside = True
        if definite[i] and not inside[i] and seen_inside:
            out_idx = i
            break
    if out_idx is None:
        raise NoExitWithinTrace(
            f"trace (t_end={trace.t_end:g}) ends inside the heart; "
            f"extend t_end")

    # parity bisection down to facet scale
    t_lo, t_hi = ts[out_idx - 1], ts[out_idx]
    for _ in range(48):
        t_mid = 0.5 * (t_lo + t_hi)
        x_mid = trace.eval(t_mid).x
        if H.mesh.contains(x_mid[None, :])[0]:
            t_lo = t_mid
        else:
            t_hi = t_mid
    t_exit = 0.5 * (t_lo + t_hi)

    # refine against the smooth parametric boundary via damped Newton
    x_exit = trace.eval(t_exit).x
    vi = int(np.argmin(((H.mesh.vertices - x_exit) ** 2).sum(axis=1)))
    psi, phi = float(H.psis[vi]), float(H.phis[vi])
    psi = min(max(psi, 1e-6), np.pi)
    z = np.array([t_exit, psi, phi])
    lam = 1e-8
    refined = False
    fval = None
    scale = max(1.0, float(np.linalg.norm(x_exit - H.p)))
    for _ in range(60):
        s_here = H.boundary_points([z[1]], [z[2]])[0]
        st = trace.eval(min(max(z[0], trace.t[0]), trace.t_end))
        F = st.x - s_here
        if np.linalg.norm(F) < 1e-9 * scale:
            refined = True
            break
        dpsi = 1e-6 if z[1] + 1e-6 <= np.pi else -1e-6
        dphi = 1e-6
        sp = H.boundary_points([z[1] + dpsi, z[1]], [z[2], z[2] + dphi])
        dS_dpsi = (sp[0] - s_here) / dpsi
        dS_dphi = (sp[1] - s_here) / dphi
        J = np.column_stack([st.u, -dS_dpsi, -dS_dphi])
        try:
            step = np.linalg.solve(J.T @ J + lam * np.eye(3), J.T @ F)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        z_new = z - step
        z_new[0] = min(max(z_new[0], trace.t[0]), trace.t_end)
        z_new[1] = min(max(z_new[1], 1e-8), np.pi)
        s_new = H.boundary_points([z_new[1]], [z_new[2]])[0]
        F_new = trace.eval(z_new[0]).x - s_new
        if np.linalg.norm(F_new) < np.linalg.norm(F):
            z = z_new
            lam = max(lam * 0.3, 1e-12)
        else:
            lam *= 10
            if lam > 1e6:
                break
    if refined:
        t_exit = float(z[0])
        point = trace.eval(t_exit).x
        psi, phi = float(z[1]), float(z[2])
    else:
        point = trace.eval(t_exit).x
    tol = max(1e-9, 1e-9 * H.r)
    return HeartExit(t_exit, point, psi, phi,
                     t_exit <= 2.0 * np.pi * H.r + tol,
                     t_exit <= 4.0 * np.pi * H.r + tol, refined)


# ---------------------------------------------------------------------------
# remainder order of the leading expansion
# ---------------------------------------------------------------------------

@dataclass
class RemainderFit:
    slope: float
    degenerate: bool           # remainder at machine noise; slope meaningless
    lambdas: np.ndarray
    residuals: np.ndarray
    noise_floor: float
    used: np.ndarray


def leading_order_tangent(u0, ahat, theta0: float, lam):
    """Tangent vector whose metric exponential is the leading-order image."""
    lam = np.asarray(lam, dtype=float)
    s = math.sin(theta0)
    if s == 0.0:
        cu = 2.0 * math.pi
        ca = 0.0
    else:
        cu = math.sin(2.0 * math.pi * s) / s
        ca = (1.0 - math.cos(2.0 * math.pi * s)) / s
    return lam[..., None] * (cu * np.asarray(u0) + ca * np.asarray(ahat))


def remainder_order(M: MetricField, p, u0, theta0: float,
                    ahat=None, lambdas=None,
                    cfg: IntegratorConfig | None = None,
                    noise_floor: float | None = None) -> RemainderFit:
    """Log-log slope of |exp_cg(lam A) - leading(lam A)| against lam.

    The leading-order image is realized through the metric exponential map
    (the expansion lives in geodesic normal coordinates).  A cubic remainder
    gives slope ~3; in flat space the remainder sits at integrator noise and
    the fit is reported as degenerate rather than failed.
    """
    if not 0.0 <= theta0 < math.pi / 2:
        raise DegenerateDirection(f"theta0 must lie in [0, pi/2); got {theta0:g}")
    cfg = cfg or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    p = np.asarray(p, dtype=float)
    frame = M.frame(p, u0)
    u0 = frame[0]
    ahat = frame[1] if ahat is None else np.asarray(ahat, dtype=float)
    lambdas = np.geomspace(1e-3, 1e-1, 9) if lambdas is None else \
        np.asarray(lambdas, dtype=float)
    direction = math.cos(theta0) * u0 + math.sin(theta0) * ahat
    A = lambdas[:, None] * direction
    pts = exp_cg_batch(M, p, u0, A, cfg)
    T = leading_order_tangent(u0, ahat, theta0, lambdas)
    lead = metric_exp(M, p, T, cfg)
    res = np.linalg.norm(pts - lead, axis=1)
    if noise_floor is None:
        scale = float(np.max(np.linalg.norm(lead - p, axis=1)))
        noise_floor = 1e4 * cfg.rel_tol * max(1.0, scale)
    used = res > 30.0 * noise_floor
    if used.sum() < 4:
        return RemainderFit(float("nan"), True, lambdas, res, noise_floor, used)
    slope = float(np.polyfit(np.log(lambdas[used]), np.log(res[used]), 1)[0])
    return RemainderFit(slope, False, lambdas, res, noise_floor, used)
