"""Ball-event bookkeeping, no-spiral diagnostics, and heart sizes.

A curve spirals toward p* if it eventually stays inside every neighbourhood
of p* without reaching it.  A finite trace can never witness that, so the
diagnostic here only reports evidence: for each radius in a schedule, whether
the trace exits the ball again after its last entry.  The verdict
TRAPPED-AT-HORIZON means "did not exit within this trace" and nothing more;
re-running with a longer trace resolves it.

Heart sizes are containment estimates against a meshed boundary:

* R1 -- largest radius such that the sampled balls through p with u0 tangent
  to their boundary stay inside the heart closure,
* R2 -- largest radius of the half ball at p (points whose initial geodesic
  direction has a non-negative u0 component) inside the closure,
* R  -- largest radius such that every sampled ball with p on its boundary
  and u0 pointing into or tangent to it fits inside the closure.

Closure membership is ray-cast parity with a closure tolerance, a sampling
parameter held fixed across mesh refinements; all estimates carry their
sampling metadata.  Near the cusp, containment is tolerance-limited by
construction: the boundary meets its tangent direction flatter than any
sphere, so the reported values are resolution-scale estimates, not limits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, MeshTooCoarse
from .expmap import HeartSample, trace_heart_boundary
from .flow import Trace
from .geodesy import (ShootingConfig, distance_batch, metric_exp,
                      riemannian_distance)
from .metricfield import MetricField

__all__ = [
    "BallEvent", "ball_events", "spiral_diagnostic", "SpiralReport",
    "RadiusVerdict", "SizeSampling", "SizeEstimate", "heart_size_R1",
    "heart_size_R2", "heart_size_R", "compact_bound_scan", "ScanReport",
    "riemannian_distance",
]


# ---------------------------------------------------------------------------
# ball events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallEvent:
    kind: str      # "entry" | "exit"
    t: float
    point: np.ndarray


def _detection_grid(trace: Trace, scale: float):
    """Trace nodes plus a uniform grid fine enough to catch dips of ~scale."""
    ts = trace.t
    node_gap = float(np.max(np.diff(ts))) if len(ts) > 1 else np.inf
    if node_gap <= scale:
        return ts
    n = int(np.ceil(trace.t_end / scale)) + 1
    uniform = np.linspace(ts[0], ts[-1], n)
    return np.unique(np.concatenate([ts, uniform]))


def ball_events(trace: Trace, center, radius: float, M: MetricField,
                *, refine_tol: float = 1e-8,
                shooting: ShootingConfig | None = None) -> list[BallEvent]:
    """Boundary crossings of B(center, radius) along the trace.

    Sign changes of d(x(t), center) - radius are located by bisection to
    ``refine_tol`` in t.  The trace is sampled at its nodes plus a uniform
    grid with spacing radius/4, so excursions shallower than the grid can
    resolve may go unreported.  Events alternate by construction.
    """
    center = np.asarray(center, dtype=float)
    ts = _detection_grid(trace, radius / 4.0)
    xs, _, _ = trace.eval_many(ts)
    phi = distance_batch(M, xs, center, shooting) - radius
    sign = phi >= 0.0
    flips = np.flatnonzero(sign[1:] != sign[:-1])
    if len(flips) == 0:
        return []
    lo = ts[flips]
    hi = ts[flips + 1]
    lo_sign = sign[flips]
    n_iter = max(1, int(np.ceil(np.log2((hi - lo).max() / refine_tol))))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        x_mid, _, _ = trace.eval_many(mid)
        mid_sign = (distance_batch(M, x_mid, center, shooting) - radius) >= 0.0
        move_lo = mid_sign == lo_sign
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_lo, hi, mid)
    events = []
    for k, i in enumerate(flips):
        t_ev = 0.5 * (lo[k] + hi[k])
        x_ev, _, _ = trace.eval_many([t_ev])
        kind = "entry" if sign[i] else "exit"
        events.append(BallEvent(kind, float(t_ev), x_ev[0]))
    return events


# ---------------------------------------------------------------------------
# spiral diagnostics
# ---------------------------------------------------------------------------

@dataclass
class RadiusVerdict:
    radius: float
    n_entries: int
    n_exits: int
    last_entry_t: float | None
    verdict: str                 # EXITED | TRAPPED-AT-HORIZON | NEVER-ENTERED
    remaining_arc: float         # trace arc length after the last event

    def to_dict(self):
        return {"radius": self.radius, "n_entries": self.n_entries,
                "n_exits": self.n_exits, "last_entry_t": self.last_entry_t,
                "verdict": self.verdict, "remaining_arc": self.remaining_arc}


@dataclass
class SpiralReport:
    p_star: np.ndarray
    t_end: float
    verdicts: list[RadiusVerdict]

    @property
    def trapped_radii(self):
        return [v.radius for v in self.verdicts
                if v.verdict == "TRAPPED-AT-HORIZON"]

    def to_dict(self):
        return {"p_star": list(self.p_star), "t_end": self.t_end,
                "verdicts": [v.to_dict() for v in self.verdicts]}


def spiral_diagnostic(trace: Trace, p_star, radii, M: MetricField,
                      shooting: ShootingConfig | None = None) -> SpiralReport:
    """Entry/exit evidence for each ball B(p*, r), r in the schedule.

    A trace that ends inside a ball gets TRAPPED-AT-HORIZON, which is a
    statement about the trace end, never a spiralling claim.
    """
    p_star = np.asarray(p_star, dtype=float)
    verdicts = []
    end_dist = float(distance_batch(M, trace.x[-1:], p_star, shooting)[0])
    start_dist = float(distance_batch(M, trace.x[:1], p_star, shooting)[0])
    for r in radii:
        events = ball_events(trace, p_star, r, M, shooting=shooting)
        entries = [e for e in events if e.kind == "entry"]
        exits = [e for e in events if e.kind == "exit"]
        started_inside = start_dist < r
        last_entry = entries[-1].t if entries else (0.0 if started_inside else None)
        ends_inside = end_dist < r
        if ends_inside:
            verdict = "TRAPPED-AT-HORIZON"
        elif last_entry is None:
            verdict = "NEVER-ENTERED"
        else:
            verdict = "EXITED"
        last_t = events[-1].t if events else 0.0
        verdicts.append(RadiusVerdict(float(r), len(entries), len(exits),
                                      last_entry, verdict,
                                      float(trace.t_end - last_t)))
    return SpiralReport(p_star, trace.t_end, verdicts)


# ---------------------------------------------------------------------------
# heart sizes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SizeSampling:
    """Sampling resolution for the containment estimators.

    ``boundary_tol`` is the closure tolerance for point-in-heart queries;
    it defaults to 0.04 * r of the heart and must be held fixed when
    comparing estimates across mesh refinements.
    """

    n_centers: int = 16         # tangent-ball directions (R1)
    n_hemisphere: int = 64      # ball family directions (R)
    n_ball_dirs: int = 26       # directions sampled inside one candidate ball
    n_shells: int = 4
    bisect_iters: int = 12
    r_hi: float | None = None
    boundary_tol: float | None = None
    seed: int = 20250809

    def tol_for(self, H: HeartSample) -> float:
        return self.boundary_tol if self.boundary_tol is not None \
            else 0.04 * H.r


@dataclass
class SizeEstimate:
    R: float
    R1: float
    R2: float
    consistent: bool            # min(R1, R2/2) <= R within sampling slack
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {"R": self.R, "R1": self.R1, "R2": self.R2,
                "consistent": self.consistent, "metadata": self.metadata}


def _require_mesh(H: HeartSample):
    if H.n_psi < 8:
        raise MeshTooCoarse(
            f"heart mesh with n_psi={H.n_psi} is too coarse for containment "
            f"estimates; use at least 8")


def _hemisphere_dirs(M, p, u0, n, rng, tangent_only=False, with_equator=True):
    """g-unit directions at p with g(v, u0) >= 0 (or = 0 for tangent_only)."""
    frame = M.frame(p, u0)
    d = M.d
    dirs = []
    if tangent_only:
        angles = rng.uniform(0.0, 2 * np.pi) + 2 * np.pi * np.arange(n) / n
        for ang in angles:
            dirs.append(np.cos(ang) * frame[1] + np.sin(ang) * frame[2])
        return np.array(dirs)
    coeff = rng.normal(size=(n, d))
    coeff /= np.linalg.norm(coeff, axis=1, keepdims=True)
    coeff[:, 0] = np.abs(coeff[:, 0])
    dirs = coeff @ frame
    if with_equator:
        k = max(8, n // 8)
        angles = 2 * np.pi * np.arange(k) / k
        eq = (np.cos(angles)[:, None] * frame[1]
              + np.sin(angles)[:, None] * frame[2])
        dirs = np.concatenate([dirs, eq], axis=0)
    return dirs


def _ball_coeffs(n_dirs, d, rng):
    """Unit coefficient vectors reused for every candidate ball."""
    coeff = rng.normal(size=(n_dirs, d))
    return coeff / np.linalg.norm(coeff, axis=1, keepdims=True)


def _ball_points(M, center, radius, coeff, n_shells):
    """Sample points of the metric ball B(center, radius) via exp at center."""
    dirs = coeff @ M.frame(center)
    shells = radius * (np.arange(1, n_shells + 1) / n_shells) * 0.995
    V = (shells[:, None, None] * dirs[None, :, :]).reshape(-1, M.d)
    try:
        pts = metric_exp(M, center, V)
    except DomainError:
        return None
    return np.vstack([center[None, :], pts])


def _in_closure(H: HeartSample, pts, tol) -> bool:
    """All points inside the heart closure (parity, tolerance for the rest)."""
    inside = H.mesh.contains(pts)
    out_pts = pts[~inside]
    if len(out_pts) == 0:
        return True
    return bool(np.all(H.mesh.distance(out_pts) <= tol))


def _largest_passing(passes, r_hi, iters):
    """Largest r in (0, r_hi] passing a monotone containment predicate."""
    if passes(r_hi):
        return r_hi, True
    lo, hi = 0.0, r_hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == 0.0:
            break
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo, False


def _default_r_hi(H: HeartSample):
    ext = np.linalg.norm(H.mesh.vertices - H.p, axis=1).max()
    return float(ext)


def heart_size_R1(M: MetricField, p, u0, H: HeartSample,
                  sampling: SizeSampling | None = None) -> float:
    """Largest sampled radius of balls tangent to u0 at p inside the closure."""
    sampling = sampling or SizeSampling()
    _require_mesh(H)
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(sampling.seed)
    dirs = _hemisphere_dirs(M, p, u0, sampling.n_centers, rng,
                            tangent_only=True)
    coeff = _ball_coeffs(sampling.n_ball_dirs, M.d, rng)
    tol = sampling.tol_for(H)

    def passes(r):
        batches = []
        for v in dirs:
            try:
                c = metric_exp(M, p, r * v)
            except DomainError:
                return False
            pts = _ball_points(M, c, r, coeff, sampling.n_shells)
            if pts is None:
                return False
            batches.append(pts)
        return _in_closure(H, np.vstack(batches), tol)

    r_hi = sampling.r_hi or _default_r_hi(H)
    est, _ = _largest_passing(passes, r_hi, sampling.bisect_iters)
    return float(est)


def heart_size_R2(M: MetricField, p, u0, H: HeartSample,
                  sampling: SizeSampling | None = None) -> float:
    """Largest sampled half-ball radius at p inside the heart closure."""
    sampling = sampling or SizeSampling()
    _require_mesh(H)
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(sampling.seed + 1)
    dirs = _hemisphere_dirs(M, p, u0, sampling.n_hemisphere, rng)
    tol = sampling.tol_for(H)
    shells_frac = (np.arange(1, sampling.n_shells + 1)
                   / sampling.n_shells) * 0.995

    def passes(r):
        V = (r * shells_frac[:, None, None] * dirs[None, :, :]).reshape(-1, M.d)
        try:
            pts = metric_exp(M, p, V)
        except DomainError:
            return False
        return _in_closure(H, pts, tol)

    r_hi = sampling.r_hi or _default_r_hi(H)
    est, _ = _largest_passing(passes, r_hi, sampling.bisect_iters)
    return float(est)


def heart_size_R(M: MetricField, p, u0, H: HeartSample,
                 sampling: SizeSampling | None = None) -> SizeEstimate:
    """Size of the heart: balls with p on the boundary, u0 into or tangent.

    Returns the direct estimate together with R1 and R2 and checks the
    combination relation min(R1, R2/2) <= R at estimate level.
    """
    sampling = sampling or SizeSampling()
    _require_mesh(H)
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(sampling.seed + 2)
    dirs = _hemisphere_dirs(M, p, u0, sampling.n_hemisphere, rng)
    coeff = _ball_coeffs(sampling.n_ball_dirs, M.d, rng)
    tol = sampling.tol_for(H)

    def passes(r):
        batches = []
        for v in dirs:
            try:
                c = metric_exp(M, p, r * v)
            except DomainError:
                return False
            pts = _ball_points(M, c, r, coeff, sampling.n_shells)
            if pts is None:
                return False
            batches.append(pts)
        return _in_closure(H, np.vstack(batches), tol)

    r_hi = sampling.r_hi or _default_r_hi(H)
    est, capped = _largest_passing(passes, r_hi, sampling.bisect_iters)
    r1 = heart_size_R1(M, p, u0, H, sampling)
    r2 = heart_size_R2(M, p, u0, H, sampling)
    consistent = min(r1, r2 / 2.0) <= est * 1.05 + tol
    meta = {"n_hemisphere": sampling.n_hemisphere,
            "n_centers": sampling.n_centers,
            "n_ball_dirs": sampling.n_ball_dirs,
            "n_shells": sampling.n_shells,
            "boundary_tol": tol, "r_hi": r_hi, "capped": capped,
            "mesh_n_psi": H.n_psi, "mesh_n_phi": H.n_phi,
            "seed": sampling.seed}
    return SizeEstimate(float(est), float(r1), float(r2), bool(consistent),
                        meta)


# ---------------------------------------------------------------------------
# compact lower-bound scan
# ---------------------------------------------------------------------------

@dataclass
class ScanReport:
    min_R: float
    argmin_p: np.ndarray
    argmin_u0: np.ndarray
    values: np.ndarray
    strictly_positive: bool

    def to_dict(self):
        return {"min_R": self.min_R, "argmin_p": list(self.argmin_p),
                "argmin_u0": list(self.argmin_u0),
                "values": list(self.values),
                "strictly_positive": self.strictly_positive}


def compact_bound_scan(M: MetricField, box, n_per_axis: int,
                       n_directions: int, r: float, resolution: int = 16,
                       sampling: SizeSampling | None = None,
                       seed: int = 0) -> ScanReport:
    """Minimum heart size over a chart-box grid of base points and directions.

    ``box`` is (lo, hi) per axis.  Builds a heart of domain radius ``r`` at
    every grid point/direction and reports the minimum of the R estimates.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if np.any(hi <= lo):
        raise ValueError("empty region")
    sampling = sampling or SizeSampling()
    rng = np.random.default_rng(seed)
    axes = [np.linspace(lo[i], hi[i], n_per_axis) for i in range(M.d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M.d)
    raw_dirs = rng.normal(size=(n_directions, M.d))
    raw_dirs /= np.linalg.norm(raw_dirs, axis=1, keepdims=True)
    values = []
    bases = []
    for p in grid:
        frame = M.frame(p)
        for w in raw_dirs:
            u0 = w @ frame
            H = trace_heart_boundary(M, p, u0, r, resolution)
            est = heart_size_R(M, p, u0, H, sampling)
            values.append(est.R)
            bases.append((p.copy(), u0.copy()))
    values = np.array(values)
    i_min = int(np.argmin(values))
    return ScanReport(float(values[i_min]), bases[i_min][0], bases[i_min][1],
                      values, bool(values[i_min] > 0.0))
