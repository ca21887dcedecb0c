"""Integration of metric and conformal geodesics.

The conformal geodesic equation is integrated as the first-order system

    dx/dt = u
    du/dt = a - Gamma(u, u)
    da/dt = -Gamma(u, a) - (g(a,a) + L(u,u)) u + L# u

with arc-length parameter t, unit tangent u and perpendicular acceleration a.
The system preserves g(u,u) = 1 and g(u,a) = 0 exactly; an optional
projection after each accepted step removes the floating-point drift
(normalize u, subtract the g(u,a) component from a).  Projection is on by
default and can be disabled to measure the drift.

Stepper: Dormand-Prince 5(4) embedded pair with standard PI-free step
control, hand-rolled rather than wrapped from a library so that projection,
deterministic batching and dense output stay under our control.  Dense output
is cubic Hermite on the stored nodes.

The batch integrator advances many trajectories simultaneously (synchronized
adaptive steps on a rescaled parameter), which is how mesh construction and
scans "parallelize over vertices" here.  Leaving the chart during integration
is an error (StepFailure), not a chart transition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConstraintViolation, MaxStepsExceeded, NonPositiveFactor,
                     DomainError, NotPositiveDefinite, StepFailure)
from .metricfield import ConformalFactor, MetricField, _coerce_factor

DEFAULT_CTOL = 1e-9

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class CGState:
    """Position, unit tangent and perpendicular acceleration."""

    x: np.ndarray
    u: np.ndarray
    a: np.ndarray

    def copy(self) -> "CGState":
        return CGState(self.x.copy(), self.u.copy(), self.a.copy())


def make_cg_state(M: MetricField, x, u, a=None, normalize=True) -> CGState:
    """Build a CGState; by default u is g-normalized and a projected u-perp."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a = np.zeros(M.d) if a is None else np.asarray(a, dtype=float)
    if normalize:
        g = M.metric(x)
        u = u / np.sqrt(u @ g @ u)
        a = a - (a @ g @ u) * u
    return CGState(x, u, a)


def state_residuals(M: MetricField, s: CGState):
    g = M.metric(s.x)
    return abs(float(s.u @ g @ s.u) - 1.0), abs(float(s.u @ g @ s.a))


def validate_state(M: MetricField, s: CGState, ctol: float = DEFAULT_CTOL):
    ru, rp = state_residuals(M, s)
    if ru > ctol or rp > ctol:
        raise ConstraintViolation(
            f"state violates constraints: |g(u,u)-1|={ru:.2e})"
            f" |g(u,a)|={rp:.2e} > ctol={ctol:g}")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    projection: bool = True
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


# ---------------------------------------------------------------------------
# right-hand sides (batched; Y is (B, n))
# ---------------------------------------------------------------------------

def _cg_rhs_batch(M: MetricField, Y: np.ndarray) -> np.ndarray:
    d = M.d
    X, U, A = Y[:, :d], Y[:, d:2 * d], Y[:, 2 * d:]
    M.profile.check_domain(X)
    gamma_uu, gamma_ua, a2, Luu, Lsu = M.profile.cg_terms(X, U, A)
    du = A - gamma_uu
    da = -gamma_ua - (a2 + Luu)[:, None] * U + Lsu
    return np.concatenate([U, du, da], axis=1)


def _geo_rhs_batch(M: MetricField, Y: np.ndarray) -> np.ndarray:
    d = M.d
    X, U = Y[:, :d], Y[:, d:]
    M.profile.check_domain(X)
    return np.concatenate([U, -M.profile.geodesic_terms(X, U)], axis=1)


def _cg_project(M, Y):
    d = M.d
    X, U, A = Y[:, :d], Y[:, d:2 * d], Y[:, 2 * d:]
    g = np.atleast_3d(M.profile.metric(X))
    uu = np.einsum('Bij,Bi,Bj->B', g, U, U)
    ua = np.einsum('Bij,Bi,Bj->B', g, U, A)
    drift = max(np.max(np.abs(uu - 1.0)), np.max(np.abs(ua)))
    U = U / np.sqrt(uu)[:, None]
    ua = np.einsum('Bij,Bi,Bj->B', g, U, A)
    A = A - ua[:, None] * U
    return np.concatenate([X, U, A], axis=1), drift


def _geo_project(M, Y):
    d = M.d
    X, U = Y[:, :d], Y[:, d:]
    g = np.atleast_3d(M.profile.metric(X))
    uu = np.einsum('Bij,Bi,Bj->B', g, U, U)
    drift = np.max(np.abs(uu - 1.0))
    return np.concatenate([X, U / np.sqrt(uu)[:, None]], axis=1), drift


def _cg_residuals(M, Y):
    d = M.d
    X, U, A = Y[:, :d], Y[:, d:2 * d], Y[:, 2 * d:]
    g = np.atleast_3d(M.profile.metric(X))
    uu = np.einsum('Bij,Bi,Bj->B', g, U, U)
    ua = np.einsum('Bij,Bi,Bj->B', g, U, A)
    return np.abs(uu - 1.0), np.abs(ua)


# ---------------------------------------------------------------------------
# traces with cubic-Hermite dense output
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    """Arc-length-ordered samples of one trajectory plus step metadata."""

    t: np.ndarray          # (N,) strictly increasing
    x: np.ndarray          # (N, d)
    u: np.ndarray
    a: np.ndarray
    dx: np.ndarray         # node derivatives for dense output
    du: np.ndarray
    da: np.ndarray
    res_unit: np.ndarray   # (N,) |g(u,u)-1| of the stored samples
    res_perp: np.ndarray   # (N,) |g(u,a)|
    accepted: int
    rejected: int
    max_drift: float       # max pre-projection residual over accepted steps

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def state(self, i: int) -> CGState:
        return CGState(self.x[i], self.u[i], self.a[i])

    def _hermite(self, idx, tau, y0, y1, f0, f1, h):
        t2 = tau * tau
        t3 = t2 * tau
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + tau
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return (h00[:, None] * y0 + h10[:, None] * (h[:, None] * f0)
                + h01[:, None] * y1 + h11[:, None] * (h[:, None] * f1))

    def eval_many(self, ts):
        """Dense evaluation at sorted or unsorted times within [t0, t_end]."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < self.t[0] - 1e-12) or np.any(ts > self.t[-1] + 1e-12):
            raise ValueError("evaluation time outside the trace interval")
        idx = np.clip(np.searchsorted(self.t, ts, side='right') - 1,
                      0, len(self.t) - 2)
        h = self.t[idx + 1] - self.t[idx]
        tau = np.clip((ts - self.t[idx]) / h, 0.0, 1.0)
        out = []
        for y, f in ((self.x, self.dx), (self.u, self.du), (self.a, self.da)):
            out.append(self._hermite(idx, tau, y[idx], y[idx + 1],
                                     f[idx], f[idx + 1], h))
        return out[0], out[1], out[2]

    def eval(self, t: float) -> CGState:
        x, u, a = self.eval_many([t])
        return CGState(x[0], u[0], a[0])


@dataclass
class BatchTrace:
    """Shared-step traces of a batch of trajectories (common relative grid)."""

    sigma: np.ndarray       # (S,) in [0, 1]
    scale: np.ndarray       # (B,) per-row arc length
    Y: np.ndarray           # (S, B, n)
    F: np.ndarray           # (S, B, n) physical dy/dt
    res_unit: np.ndarray    # (S, B)
    res_perp: np.ndarray
    d: int
    accepted: int
    rejected: int
    max_drift: float

    @property
    def n_rows(self) -> int:
        return self.Y.shape[1]

    def view(self, i: int) -> Trace:
        d = self.d
        Y = self.Y[:, i, :]
        F = self.F[:, i, :]
        return Trace(self.sigma * self.scale[i],
                     Y[:, :d], Y[:, d:2 * d], Y[:, 2 * d:],
                     F[:, :d], F[:, d:2 * d], F[:, 2 * d:],
                     self.res_unit[:, i], self.res_perp[:, i],
                     self.accepted, self.rejected, self.max_drift)


# ---------------------------------------------------------------------------
# the embedded stepper
# ---------------------------------------------------------------------------

_RETRYABLE = (DomainError, NotPositiveDefinite, NonPositiveFactor,
              FloatingPointError)


def _initial_step(rhs, y0, f0, sc, goal, max_step):
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, max_step, goal)
    try:
        f1 = rhs(y0 + h0 * f0)
        d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    except _RETRYABLE:
        return min(h0, 1e-6)
    m = max(d1, d2)
    h1 = (0.01 / m) ** 0.2 if m > 1e-15 else max(1e-6, h0 * 1e3)
    return min(100 * h0, h1, max_step, goal)


def _integrate(rhs, project, residuals, y0, t_end, cfg, store):
    """Advance y' = rhs(y) from 0 to t_end; returns node arrays.

    ``y0`` has shape (B, n); the step size is shared across the batch and the
    error norm is the max over rows.
    """
    y = np.array(y0, dtype=float)
    B, n = y.shape
    f = rhs(y)
    sc0 = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    h = _initial_step(rhs, y, f, sc0, t_end, cfg.max_step)
    t = 0.0
    accepted = rejected = 0
    max_drift = 0.0
    ru, rp = residuals(y)
    nodes_t, nodes_y, nodes_f = [0.0], [y.copy()], [f.copy()]
    nodes_ru, nodes_rp = [ru.copy()], [rp.copy()]
    k = np.empty((7, B, n))
    while t < t_end:
        if accepted + rejected >= cfg.max_steps:
            raise MaxStepsExceeded(
                f"exceeded {cfg.max_steps} steps at t={t:g}/{t_end:g}")
        h = min(h, t_end - t, cfg.max_step)
        if h < 1e-13 * max(1.0, abs(t)):
            raise StepFailure(f"step size underflow at t={t:g}")
        try:
            k[0] = f
            for i in range(1, 7):
                yi = y + h * np.einsum('s,sBn->Bn', _A[i], k[:i])
                k[i] = rhs(yi)
            y_new = yi  # stage 7 input is the 5th-order solution
            err_vec = h * np.einsum('s,sBn->Bn', _E, k)
        except _RETRYABLE:
            rejected += 1
            h *= 0.5
            continue
        if not np.all(np.isfinite(y_new)):
            rejected += 1
            h *= 0.5
            continue
        sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / sc) ** 2, axis=1)).max()
        if err <= 1.0:
            t += h
            ru, rp = residuals(y_new)
            max_drift = max(max_drift, float(ru.max()), float(rp.max()))
            if cfg.projection:
                y_new, _ = project(y_new)
                ru, rp = residuals(y_new)
            y = y_new
            f = rhs(y)
            accepted += 1
            if store:
                nodes_t.append(t)
                nodes_y.append(y.copy())
                nodes_f.append(f.copy())
                nodes_ru.append(ru.copy())
                nodes_rp.append(rp.copy())
        else:
            rejected += 1
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
    if not store:
        nodes_t = [0.0, t]
        nodes_y = [nodes_y[0], y]
        nodes_f = [nodes_f[0], f]
        ru, rp = residuals(y)
        nodes_ru.append(ru)
        nodes_rp.append(rp)
    return (np.array(nodes_t), np.array(nodes_y), np.array(nodes_f),
            np.array(nodes_ru), np.array(nodes_rp), accepted, rejected,
            max_drift)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def cg_rhs(M: MetricField, s: CGState):
    """Right-hand side (dx, du, da) of the conformal geodesic system at s."""
    Y = np.concatenate([s.x, s.u, s.a])[None, :]
    out = _cg_rhs_batch(M, Y)[0]
    d = M.d
    return out[:d], out[d:2 * d], out[2 * d:]


def integrate_cg(M: MetricField, s0: CGState, t_end: float,
                 cfg: IntegratorConfig | None = None,
                 ctol: float = DEFAULT_CTOL) -> Trace:
    """Integrate the conformal geodesic from s0 over arc length [0, t_end]."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    cfg = cfg or IntegratorConfig()
    validate_state(M, s0, ctol)
    batch = integrate_cg_batch(M, s0.x[None], s0.u[None], s0.a[None],
                               t_end, cfg, store=True, validate=False)
    return batch.view(0)


def integrate_cg_batch(M: MetricField, X0, U0, A0, t_end,
                       cfg: IntegratorConfig | None = None,
                       store: bool = True, validate: bool = True,
                       ctol: float = DEFAULT_CTOL) -> BatchTrace:
    """Integrate a batch of conformal geodesics with synchronized steps.

    ``t_end`` may be a scalar or per-row array; rows are advanced on the
    common parameter sigma = t / t_end(row).
    """
    cfg = cfg or IntegratorConfig()
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B = X0.shape[0]
    T = np.broadcast_to(np.asarray(t_end, dtype=float), (B,)).copy()
    if np.any(T <= 0):
        raise ValueError("all arc lengths must be positive")
    if validate:
        for i in range(B):
            validate_state(M, CGState(X0[i], U0[i], A0[i]), ctol)
    y0 = np.concatenate([X0, U0, A0], axis=1)

    scaled_cfg = cfg
    if np.max(T) != 1.0:
        # step bounds live in arc length; convert to sigma
        scaled_cfg = IntegratorConfig(cfg.rel_tol, cfg.abs_tol,
                                      cfg.max_step / np.max(T),
                                      cfg.projection, cfg.max_steps)

    def rhs(Y):
        return T[:, None] * _cg_rhs_batch(M, Y)

    def project(Y):
        return _cg_project(M, Y)

    def residuals(Y):
        return _cg_residuals(M, Y)

    sigma, Y, F, ru, rp, acc, rej, drift = _integrate(
        rhs, project, residuals, y0, 1.0, scaled_cfg, store)
    return BatchTrace(sigma, T, Y, F / T[None, :, None], ru, rp,
                      M.d, acc, rej, drift)


def integrate_metric_geodesic(M: MetricField, x0, u0, t_end: float,
                              cfg: IntegratorConfig | None = None) -> Trace:
    """Unit-speed metric geodesic from (x0, u0); returned trace has a = 0."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    g = M.metric(x0)
    nu = np.sqrt(u0 @ g @ u0)
    if abs(nu - 1.0) > DEFAULT_CTOL:
        raise ConstraintViolation(f"|u0|_g = {nu:.12g}, expected 1")
    y0 = np.concatenate([x0, u0])[None, :]

    def rhs(Y):
        return _geo_rhs_batch(M, Y)

    def project(Y):
        return _geo_project(M, Y)

    def residuals(Y):
        d = M.d
        X, U = Y[:, :d], Y[:, d:]
        gb = np.atleast_3d(M.profile.metric(X))
        uu = np.einsum('Bij,Bi,Bj->B', gb, U, U)
        return np.abs(uu - 1.0), np.zeros(Y.shape[0])

    t, Y, F, ru, rp, acc, rej, drift = _integrate(
        rhs, project, residuals, y0, t_end, cfg, store=True)
    d = M.d
    N = len(t)
    zeros = np.zeros((N, d))
    return Trace(t, Y[:, 0, :d], Y[:, 0, d:], zeros,
                 F[:, 0, :d], F[:, 0, d:], zeros.copy(),
                 ru[:, 0], rp[:, 0], acc, rej, drift)


def euclid_circle(p, u0, a0, t):
    """Closed-form Euclidean conformal geodesic (circle through p).

    x(t) = p + u0 |a0|^-1 sin(|a0| t) + a0 |a0|^-2 (1 - cos(|a0| t)),
    with the a0 = 0 limit p + t u0.  Requires a0 perpendicular to u0.
    """
    p = np.asarray(p, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    t = np.asarray(t, dtype=float)
    mag = np.linalg.norm(a0)
    tt = t[..., None]
    if mag == 0.0:
        out = p + tt * u0
    else:
        out = (p + u0 * np.sin(mag * tt) / mag
               + a0 * (1.0 - np.cos(mag * tt)) / mag**2)
    return out if t.ndim else out.reshape(-1)


def conformal_pushforward(s: CGState, M: MetricField, omega) -> CGState:
    """CGState of the same curve under the rescaled metric Omega^2 g."""
    factor = _coerce_factor(omega, M.d)
    w, dw, _ = factor.jets(s.x[None, :])
    w0 = w[0]
    ups = dw[0] / w0
    _, ginv = _metric_pair(M, s.x)
    ups_sharp = ginv @ ups
    u_hat = s.u / w0
    a_hat = (s.a - ups_sharp + (ups @ s.u) * s.u) / w0**2
    return CGState(s.x.copy(), u_hat, a_hat)


def _metric_pair(M, x):
    g = M.metric(x)
    return g, np.linalg.inv(g)


def conformal_arclength(trace: Trace, omega: ConformalFactor, n_sub: int = 4):
    """Cumulative arc length of the trace under Omega^2 g (Simpson per segment)."""
    t = trace.t
    out = np.zeros(len(t))
    for i in range(len(t) - 1):
        ts = np.linspace(t[i], t[i + 1], 2 * n_sub + 1)
        xs, _, _ = trace.eval_many(ts)
        w = np.array([omega(x) for x in xs])
        h = (ts[1] - ts[0])
        simpson = (h / 3.0) * (w[0] + w[-1] + 4 * w[1:-1:2].sum()
                               + 2 * w[2:-2:2].sum())
        out[i + 1] = out[i] + simpson
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_trace_csv(trace: Trace, fh):
    """CSV schema: t, x1..xd, u1..ud, a1..ad, res_unit, res_perp."""
    d = trace.d
    cols = (["t"] + [f"x{i+1}" for i in range(d)]
            + [f"u{i+1}" for i in range(d)] + [f"a{i+1}" for i in range(d)]
            + ["res_unit", "res_perp"])
    own = isinstance(fh, (str, bytes))
    f = open(fh, "w", newline="") if own else fh
    try:
        f.write(",".join(cols) + "\n")
        for i in range(len(trace.t)):
            row = ([trace.t[i]] + list(trace.x[i]) + list(trace.u[i])
                   + list(trace.a[i]) + [trace.res_unit[i], trace.res_perp[i]])
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if own:
            f.close()
