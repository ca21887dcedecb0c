"""Metric exponential maps and Riemannian distances per chart kind.

The built-in charts have closed forms through their ambient models
(round sphere in R^{d+1}, hyperboloid in Minkowski space); everything else
falls back to geodesic integration, and distances to a local two-point
shooting solve that is only trusted inside a configured safe radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OutOfSafeRadius, StepFailure
from .flow import IntegratorConfig, integrate_metric_geodesic
from .metricfield import MetricField


# -- ambient models ---------------------------------------------------------

def _sphere_embed(X, r):
    """Stereographic chart (B,d) -> sphere of radius r in R^{d+1}."""
    s = np.einsum('bi,bi->b', X, X)
    q = r * r + s
    y = 2.0 * r * r * X / q[:, None]
    z = r * (s - r * r) / q
    return np.concatenate([y, z[:, None]], axis=1)


def _sphere_embed_tangent(X, V, r):
    s = np.einsum('bi,bi->b', X, X)
    q = r * r + s
    xv = np.einsum('bi,bi->b', X, V)
    dy = (2.0 * r * r / q)[:, None] * (V - 2.0 * (xv / q)[:, None] * X)
    dz = 4.0 * r**3 * xv / q**2
    return np.concatenate([dy, dz[:, None]], axis=1)


def _sphere_chart(P, r):
    y, z = P[:, :-1], P[:, -1]
    denom = r - z
    if np.any(denom <= 1e-14 * r):
        raise DomainError("geodesic endpoint at the chart pole")
    return r * y / denom[:, None]


def _hyper_embed(X, r):
    s = np.einsum('bi,bi->b', X, X)
    q = r * r - s
    y = 2.0 * r * r * X / q[:, None]
    z = r * (r * r + s) / q
    return np.concatenate([y, z[:, None]], axis=1)


def _hyper_embed_tangent(X, V, r):
    s = np.einsum('bi,bi->b', X, X)
    q = r * r - s
    xv = np.einsum('bi,bi->b', X, V)
    dy = (2.0 * r * r / q)[:, None] * (V + 2.0 * (xv / q)[:, None] * X)
    dz = 4.0 * r**3 * xv / q**2
    return np.concatenate([dy, dz[:, None]], axis=1)


def _hyper_chart(P, r):
    y, z = P[:, :-1], P[:, -1]
    return r * y / (r + z)[:, None]


# -- exponential map ----------------------------------------------------------

def metric_exp(M: MetricField, x, V, cfg: IntegratorConfig | None = None):
    """Endpoint of the metric geodesic with initial velocity V after unit time.

    V may be a single vector or a batch (B, d) sharing the base point x.
    Closed forms on euclidean/sphere/hyperbolic kinds; integration otherwise.
    """
    x = np.asarray(x, dtype=float)
    V = np.asarray(V, dtype=float)
    single = V.ndim == 1
    Vb = np.atleast_2d(V)
    B = Vb.shape[0]
    Xb = np.broadcast_to(x, (B, M.d))

    if M.kind == "euclidean":
        out = Xb + Vb
    elif M.kind == "sphere":
        r = M.radius
        P = _sphere_embed(Xb, r)
        W = _sphere_embed_tangent(Xb, Vb, r)
        arc = np.linalg.norm(W, axis=1)
        out = np.empty_like(Vb)
        zero = arc < 1e-300
        out[zero] = Xb[zero]
        nz = ~zero
        if np.any(nz):
            What = W[nz] / arc[nz, None]
            ang = arc[nz] / r
            G = np.cos(ang)[:, None] * P[nz] + r * np.sin(ang)[:, None] * What
            out[nz] = _sphere_chart(G, r)
    elif M.kind == "hyperbolic":
        r = M.radius
        P = _hyper_embed(Xb, r)
        W = _hyper_embed_tangent(Xb, Vb, r)
        w2 = (W[:, :-1] ** 2).sum(axis=1) - W[:, -1] ** 2
        arc = np.sqrt(np.maximum(w2, 0.0))
        out = np.empty_like(Vb)
        zero = arc < 1e-300
        out[zero] = Xb[zero]
        nz = ~zero
        if np.any(nz):
            What = W[nz] / arc[nz, None]
            ang = arc[nz] / r
            G = np.cosh(ang)[:, None] * P[nz] + r * np.sinh(ang)[:, None] * What
            out[nz] = _hyper_chart(G, r)
    else:
        g = M.metric(x)
        out = np.empty_like(Vb)
        for i in range(B):
            arc = float(np.sqrt(Vb[i] @ g @ Vb[i]))
            if arc < 1e-300:
                out[i] = x
            else:
                tr = integrate_metric_geodesic(M, x, Vb[i] / arc, arc, cfg)
                out[i] = tr.x[-1]
    return out[0] if single else out


# -- distances -----------------------------------------------------------------

@dataclass(frozen=True)
class ShootingConfig:
    """Local two-point geodesic solve for metrics without a closed form."""

    safe_radius: float = 0.5   # chart-coordinate trust region around x
    tol: float = 1e-10
    max_iter: int = 60
    fd_step: float = 1e-7
    integrator: IntegratorConfig = field(
        default_factory=lambda: IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12))


def _distance_by_shooting(M, x, y, cfg: ShootingConfig):
    sep = float(np.linalg.norm(y - x))
    if sep > cfg.safe_radius:
        raise OutOfSafeRadius(
            f"chart separation {sep:g} exceeds the validated shooting radius "
            f"{cfg.safe_radius:g}", safe_radius=cfg.safe_radius)
    if sep == 0.0:
        return 0.0
    g = M.metric(x)
    v = y - x
    fv = metric_exp(M, x, v, cfg.integrator) - y
    for _ in range(cfg.max_iter):
        err = np.linalg.norm(fv)
        if err < cfg.tol:
            break
        J = np.empty((M.d, M.d))
        for j in range(M.d):
            dv = np.zeros(M.d)
            dv[j] = cfg.fd_step * max(1.0, np.linalg.norm(v))
            J[:, j] = (metric_exp(M, x, v + dv, cfg.integrator) - y - fv) / dv[j]
        try:
            step = np.linalg.solve(J, fv)
        except np.linalg.LinAlgError:
            raise OutOfSafeRadius("shooting Jacobian singular",
                                  safe_radius=cfg.safe_radius) from None
        lam = 1.0
        for _ in range(12):
            v_new = v - lam * step
            f_new = metric_exp(M, x, v_new, cfg.integrator) - y
            if np.linalg.norm(f_new) < err:
                v, fv = v_new, f_new
                break
            lam *= 0.5
        else:
            raise OutOfSafeRadius("shooting line search stalled",
                                  safe_radius=cfg.safe_radius)
    else:
        raise OutOfSafeRadius("shooting did not converge",
                              safe_radius=cfg.safe_radius)
    return float(np.sqrt(v @ g @ v))


def riemannian_distance(M: MetricField, x, y,
                        shooting: ShootingConfig | None = None) -> float:
    """Distance induced by the metric.

    Closed form for the euclidean/sphere/hyperbolic kinds.  Other kinds use
    the local shooting estimate, valid only inside ``shooting.safe_radius``
    (raises OutOfSafeRadius beyond it).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if M.kind == "euclidean":
        return float(np.linalg.norm(y - x))
    if M.kind == "sphere":
        r = M.radius
        P = _sphere_embed(np.stack([x, y]), r)
        c = float(P[0] @ P[1]) / r**2
        return r * float(np.arccos(np.clip(c, -1.0, 1.0)))
    if M.kind == "hyperbolic":
        M.profile.check_domain(np.stack([x, y]))
        r = M.radius
        H = _hyper_embed(np.stack([x, y]), r)
        c = -(float(H[0, :-1] @ H[1, :-1]) - float(H[0, -1] * H[1, -1])) / r**2
        return r * float(np.arccosh(max(c, 1.0)))
    return _distance_by_shooting(M, x, y, shooting or ShootingConfig())


def distance_batch(M: MetricField, X, center,
                   shooting: ShootingConfig | None = None) -> np.ndarray:
    """Distances from many points to one center (closed-form kinds vectorized)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    c = np.asarray(center, dtype=float)
    if M.kind == "euclidean":
        return np.linalg.norm(X - c, axis=1)
    if M.kind == "sphere":
        r = M.radius
        P = _sphere_embed(X, r)
        Pc = _sphere_embed(c[None, :], r)[0]
        cosv = np.clip(P @ Pc / r**2, -1.0, 1.0)
        return r * np.arccos(cosv)
    if M.kind == "hyperbolic":
        r = M.radius
        H = _hyper_embed(X, r)
        Hc = _hyper_embed(c[None, :], r)[0]
        coshv = -(H[:, :-1] @ Hc[:-1] - H[:, -1] * Hc[-1]) / r**2
        return r * np.arccosh(np.maximum(coshv, 1.0))
    cfg = shooting or ShootingConfig()
    return np.array([_distance_by_shooting(M, c, xi, cfg) for xi in X])
