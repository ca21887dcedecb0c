"""Riemannian metrics on a single chart, curvature, and conformal rescaling.

A :class:`MetricField` lives on one open chart of R^d (d >= 3) and evaluates
its components to second-order jets, which is exactly what the Christoffel
symbols and the Schouten tensor

    L = (Ric - R/(2(d-1)) g) / (d-2)

require.  Built-in kinds:

* ``euclidean`` -- the flat metric.
* ``sphere`` -- round sphere of given radius in the stereographic chart,
  g = 4 r^4 / (r^2 + |x|^2)^2 * delta on all of R^d.
* ``hyperbolic`` -- Poincare ball of given radius,
  g = 4 r^4 / (r^2 - |x|^2)^2 * delta on |x| < r.
* ``conformally_flat`` -- g = Omega(x)^2 * delta for a positive factor given
  in the expression language.
* ``custom`` -- full d x d component matrix of expressions.

Everything here is a pure function of its inputs; fields are immutable and
safe to share across threads.  Positive definiteness is checked at every
evaluation (by sign of the factor on the conformal family, by Cholesky on
general components); failure raises instead of propagating NaNs.

Batched variants accept points of shape ``(B, d)`` and are the work horses
for the integrators and mesh builders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprlang, jets
from .errors import (ConstraintViolation, DomainError, NonPositiveFactor,
                     NotPositiveDefinite)

_EYE_CACHE: dict[int, np.ndarray] = {}


def _eye(d):
    if d not in _EYE_CACHE:
        _EYE_CACHE[d] = np.eye(d)
    return _EYE_CACHE[d]


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


# ---------------------------------------------------------------------------
# conformal factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConformalFactor:
    """Positive scalar field Omega with jet evaluation and Upsilon = dOmega/Omega."""

    d: int
    expr: exprlang.Expr
    source: str

    @staticmethod
    def from_expression(src: str, d: int) -> "ConformalFactor":
        return ConformalFactor(d, exprlang.parse(src, d), src)

    @staticmethod
    def constant(c: float, d: int) -> "ConformalFactor":
        if c <= 0:
            raise NonPositiveFactor(f"constant factor {c} is not positive")
        return ConformalFactor.from_expression(repr(float(c)), d)

    def jets(self, X):
        """Return (w, dw, d2w) at points X of shape (B, d); w must be > 0."""
        j = exprlang.eval_jet2(self.expr, X)
        w = np.atleast_1d(np.asarray(j.value, dtype=float))
        if np.any(w <= 0.0):
            bad = float(w.min())
            raise NonPositiveFactor(f"conformal factor evaluated to {bad:g} <= 0")
        dw = np.broadcast_to(j.gradient, w.shape + (self.d,))
        d2w = np.broadcast_to(j.hessian, w.shape + (self.d, self.d))
        return w, dw, d2w

    def __call__(self, x) -> float:
        X, _ = _as_batch(x)
        return float(self.jets(X)[0][0])

    def upsilon(self, x) -> np.ndarray:
        """One-form Upsilon = Omega^-1 dOmega at a single point."""
        X, _ = _as_batch(x)
        w, dw, _ = self.jets(X)
        return dw[0] / w[0]

    def upsilon_sharp(self, metric: "MetricField", x) -> np.ndarray:
        """Vector field Upsilon^# (index raised with the metric) at x."""
        _, ginv = eval_metric(metric, x)
        return ginv @ self.upsilon(x)


def _coerce_factor(omega, d: int) -> ConformalFactor:
    if isinstance(omega, ConformalFactor):
        if omega.d != d:
            raise ValueError(f"factor dimension {omega.d} != metric dimension {d}")
        return omega
    if isinstance(omega, str):
        return ConformalFactor.from_expression(omega, d)
    return ConformalFactor.constant(float(omega), d)


# ---------------------------------------------------------------------------
# metric profiles
# ---------------------------------------------------------------------------

class _DiagConformal:
    """g_ab = w(x)^2 delta_ab; curvature via Upsilon = d(log w).

    ``schouten_coeff`` short-circuits L = coeff * g on the constant-curvature
    kinds, where no derivatives of w are needed on the right-hand side of the
    flow equations.
    """

    def __init__(self, d, omega_jets, schouten_coeff=None, domain=None,
                 flat=False, ricci_coeff=None):
        self.d = d
        self._omega_jets = omega_jets
        self.schouten_coeff = schouten_coeff
        self.ricci_coeff = ricci_coeff
        self._domain = domain
        self.flat = flat

    def check_domain(self, X):
        if self._domain is not None:
            self._domain(X)

    def omega(self, X):
        self.check_domain(X)
        return self._omega_jets(X)

    def metric(self, X):
        if self.flat:
            return np.broadcast_to(_eye(self.d), (X.shape[0], self.d, self.d)).copy()
        w = self.omega(X)[0]
        return w[:, None, None] ** 2 * _eye(self.d)

    def metric_inv(self, X):
        if self.flat:
            return self.metric(X)
        w = self.omega(X)[0]
        return _eye(self.d) / w[:, None, None] ** 2

    def _upsilon(self, X):
        w, dw, d2w = self.omega(X)
        ups = dw / w[:, None]
        dups = d2w / w[:, None, None] - ups[:, :, None] * ups[:, None, :]
        return w, ups, dups

    def _schouten(self, X):
        """Return (w, L) with L_ab in chart components."""
        if self.flat:
            B = X.shape[0]
            return np.ones(B), np.zeros((B, self.d, self.d))
        if self.schouten_coeff is not None:
            w = self.omega(X)[0]
            return w, self.schouten_coeff * w[:, None, None] ** 2 * _eye(self.d)
        w, ups, dups = self._upsilon(X)
        u2 = np.einsum('bi,bi->b', ups, ups)
        L = (-dups + ups[:, :, None] * ups[:, None, :]
             - 0.5 * u2[:, None, None] * _eye(self.d))
        return w, L

    def cg_terms(self, X, U, A):
        """Terms of the conformal geodesic equation at (x, u, a) batches."""
        if self.flat:
            B = X.shape[0]
            zero = np.zeros_like(U)
            a2 = np.einsum('bi,bi->b', A, A)
            return zero, zero, a2, np.zeros(B), zero
        if self.schouten_coeff is not None:
            w, dw, _ = self.omega(X)
            ups = dw / w[:, None]
            dups = None
        else:
            w, ups, dups = self._upsilon(X)
        uu = np.einsum('bi,bi->b', U, U)
        ua = np.einsum('bi,bi->b', U, A)
        ups_u = np.einsum('bi,bi->b', ups, U)
        ups_a = np.einsum('bi,bi->b', ups, A)
        gamma_uu = 2.0 * ups_u[:, None] * U - uu[:, None] * ups
        gamma_ua = ups_a[:, None] * U + ups_u[:, None] * A - ua[:, None] * ups
        w2 = w ** 2
        a_norm2 = w2 * np.einsum('bi,bi->b', A, A)
        if self.schouten_coeff is not None:
            c = self.schouten_coeff
            Luu = c * w2 * uu
            Lsharp_u = c * U
        else:
            u2 = np.einsum('bi,bi->b', ups, ups)
            L = (-dups + ups[:, :, None] * ups[:, None, :]
                 - 0.5 * u2[:, None, None] * _eye(self.d))
            Luu = np.einsum('bij,bi,bj->b', L, U, U)
            Lsharp_u = np.einsum('bij,bj->bi', L, U) / w2[:, None]
        return gamma_uu, gamma_ua, a_norm2, Luu, Lsharp_u

    def geodesic_terms(self, X, U):
        if self.flat:
            return np.zeros_like(U)
        w, dw, _ = self.omega(X)
        ups = dw / w[:, None]
        uu = np.einsum('bi,bi->b', U, U)
        ups_u = np.einsum('bi,bi->b', ups, U)
        return 2.0 * ups_u[:, None] * U - uu[:, None] * ups

    def curvature_batch(self, X):
        B = X.shape[0]
        d = self.d
        eye = _eye(d)
        if self.flat:
            zero2 = np.zeros((B, d, d))
            return (np.zeros((B, d, d, d)), zero2.copy(), np.zeros(B),
                    zero2.copy(), zero2.copy())
        w, ups, dups = self._upsilon(X)
        gamma = (eye[None, :, :, None] * ups[:, None, None, :]
                 + eye[None, :, None, :] * ups[:, None, :, None]
                 - eye[None, None, :, :] * ups[:, :, None, None])
        _, L = self._schouten(X)
        w2 = w ** 2
        lsharp = L / w2[:, None, None]
        if self.ricci_coeff is not None:
            g = w2[:, None, None] * eye
            ric = self.ricci_coeff * g
            scal = np.full(B, self.ricci_coeff * d)
        else:
            tr = np.einsum('bii->b', L) / w2
            ric = (d - 2) * L + tr[:, None, None] * w2[:, None, None] * eye
            scal = 2.0 * (d - 1) * tr
        return gamma, ric, scal, L, lsharp

    def component_jets(self, X):
        d = self.d
        eye = _eye(d)
        if self.flat:
            B = X.shape[0]
            g = np.broadcast_to(eye, (B, d, d)).copy()
            return g, np.zeros((B, d, d, d)), np.zeros((B, d, d, d, d))
        w, dw, d2w = self.omega(X)
        g = w[:, None, None] ** 2 * eye
        dg = 2.0 * (w[:, None] * dw)[:, None, None, :] * eye[None, :, :, None]
        hess_part = 2.0 * (dw[:, :, None] * dw[:, None, :]
                           + w[:, None, None] * d2w)
        d2g = hess_part[:, None, None, :, :] * eye[None, :, :, None, None]
        return g, dg, d2g


class _General:
    """Full component pipeline from second-order jets of g_ab."""

    def __init__(self, d, comp_jets, domain=None):
        self.d = d
        self._comp_jets = comp_jets
        self._domain = domain
        self.flat = False

    def check_domain(self, X):
        if self._domain is not None:
            self._domain(X)

    def component_jets(self, X):
        self.check_domain(X)
        return self._comp_jets(X)

    def metric(self, X):
        g = self.component_jets(X)[0]
        _cholesky_check(g)
        return g

    def metric_inv(self, X):
        return np.linalg.inv(self.metric(X))

    def _tensors(self, X, second=True):
        # dg[B,i,j,k] = d_k g_ij, d2g[B,i,j,k,l] = d_k d_l g_ij
        g, dg, d2g = self.component_jets(X)
        _cholesky_check(g)
        ginv = np.linalg.inv(g)
        # bracket[B,e,b,c] = d_b g_ec + d_c g_eb - d_e g_bc
        bracket = (np.swapaxes(dg, 2, 3) + dg - np.transpose(dg, (0, 3, 1, 2)))
        gamma = 0.5 * np.einsum('Bae,Bebc->Babc', ginv, bracket)
        if not second:
            return g, ginv, gamma, None
        # dginv[B,a,e,q] = -g^{af} (d_q g_fh) g^{he}
        dginv = -np.einsum('Baf,Bfhq,Bhe->Baeq', ginv, dg, ginv)
        # dbracket[B,e,b,c,q] = d_q bracket[e,b,c]
        dbracket = (np.swapaxes(d2g, 2, 3) + d2g
                    - np.transpose(d2g, (0, 3, 1, 2, 4)))
        dgamma = 0.5 * (np.einsum('Baeq,Bebc->Babcq', dginv, bracket)
                        + np.einsum('Bae,Bebcq->Babcq', ginv, dbracket))
        return g, ginv, gamma, dgamma

    def cg_terms(self, X, U, A):
        g, ginv, gamma, dgamma = self._tensors(X)
        ric, scal, L, lsharp = _schouten_from(g, ginv, gamma, dgamma, self.d)
        gamma_uu = np.einsum('Babc,Bb,Bc->Ba', gamma, U, U)
        gamma_ua = np.einsum('Babc,Bb,Bc->Ba', gamma, U, A)
        a_norm2 = np.einsum('Bab,Ba,Bb->B', g, A, A)
        Luu = np.einsum('Bab,Ba,Bb->B', L, U, U)
        Lsharp_u = np.einsum('Bab,Bb->Ba', lsharp, U)
        return gamma_uu, gamma_ua, a_norm2, Luu, Lsharp_u

    def geodesic_terms(self, X, U):
        _, _, gamma, _ = self._tensors(X, second=False)
        return np.einsum('Babc,Bb,Bc->Ba', gamma, U, U)

    def curvature_batch(self, X):
        g, ginv, gamma, dgamma = self._tensors(X)
        ric, scal, L, lsharp = _schouten_from(g, ginv, gamma, dgamma, self.d)
        return gamma, ric, scal, L, lsharp


def _schouten_from(g, ginv, gamma, dgamma, d):
    # Ric_{sn} = dGamma[m,n,s,m] - dGamma[m,m,s,n]
    #          + Gamma[m,m,l] Gamma[l,n,s] - Gamma[m,n,l] Gamma[l,m,s]
    ric = (np.einsum('Bmnsm->Bsn', dgamma)
           - np.einsum('Bmmsn->Bsn', dgamma)
           + np.einsum('Bmml,Blns->Bsn', gamma, gamma)
           - np.einsum('Bmnl,Blms->Bsn', gamma, gamma))
    ric = 0.5 * (ric + np.swapaxes(ric, 1, 2))
    scal = np.einsum('Bbd,Bbd->B', ginv, ric)
    L = (ric - scal[:, None, None] / (2.0 * (d - 1)) * g) / (d - 2)
    lsharp = np.einsum('Bac,Bcb->Bab', ginv, L)
    return ric, scal, L, lsharp


def _cholesky_check(g):
    asym = np.max(np.abs(g - np.swapaxes(g, -1, -2)))
    if asym > 1e-9 * (1.0 + np.max(np.abs(g))):
        raise ValueError(f"metric components not symmetric (max asymmetry {asym:g})")
    try:
        np.linalg.cholesky(0.5 * (g + np.swapaxes(g, -1, -2)))
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))
        raise NotPositiveDefinite(
            f"metric not positive definite (smallest eigenvalue {eigs.min():g})",
            smallest_eigenvalue=float(eigs.min())) from None


# ---------------------------------------------------------------------------
# the public field type
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricField:
    """Immutable chart metric; construct through the static factories."""

    d: int
    kind: str
    profile: object
    radius: float | None = None
    omega: ConformalFactor | None = None

    @staticmethod
    def _check_dim(d):
        if d < 3:
            raise ValueError(f"dimension must be >= 3 (the Schouten tensor "
                             f"divides by d-2), got {d}")

    @staticmethod
    def euclidean(d: int) -> "MetricField":
        MetricField._check_dim(d)

        def w1(X):
            B = X.shape[0]
            return np.ones(B), np.zeros((B, d)), np.zeros((B, d, d))

        return MetricField(d, "euclidean", _DiagConformal(d, w1, schouten_coeff=0.0,
                                                          flat=True, ricci_coeff=0.0))

    @staticmethod
    def sphere(d: int, radius: float = 1.0) -> "MetricField":
        MetricField._check_dim(d)
        if radius <= 0:
            raise ValueError("radius must be positive")
        r2 = radius * radius

        def wjets(X):
            s = np.einsum('bi,bi->b', X, X)
            q = r2 + s
            w = 2.0 * r2 / q
            dw = -2.0 * (w / q)[:, None] * X
            d2w = (8.0 * (w / q**2)[:, None, None] * X[:, :, None] * X[:, None, :]
                   - 2.0 * (w / q)[:, None, None] * _eye(d))
            return w, dw, d2w

        return MetricField(d, "sphere",
                           _DiagConformal(d, wjets, schouten_coeff=0.5 / r2,
                                          ricci_coeff=(d - 1) / r2),
                           radius=radius)

    @staticmethod
    def hyperbolic(d: int, radius: float = 1.0) -> "MetricField":
        MetricField._check_dim(d)
        if radius <= 0:
            raise ValueError("radius must be positive")
        r2 = radius * radius

        def domain(X):
            s = np.einsum('bi,bi->b', X, X)
            if np.any(s >= r2):
                raise DomainError(
                    f"point with |x| >= {radius:g} outside the Poincare ball")

        def wjets(X):
            s = np.einsum('bi,bi->b', X, X)
            q = r2 - s
            w = 2.0 * r2 / q
            dw = 2.0 * (w / q)[:, None] * X
            d2w = (8.0 * (w / q**2)[:, None, None] * X[:, :, None] * X[:, None, :]
                   + 2.0 * (w / q)[:, None, None] * _eye(d))
            return w, dw, d2w

        return MetricField(d, "hyperbolic",
                           _DiagConformal(d, wjets, schouten_coeff=-0.5 / r2,
                                          domain=domain, ricci_coeff=-(d - 1) / r2),
                           radius=radius)

    @staticmethod
    def conformally_flat(d: int, omega) -> "MetricField":
        MetricField._check_dim(d)
        factor = _coerce_factor(omega, d)
        return MetricField(d, "conformally_flat",
                           _DiagConformal(d, factor.jets), omega=factor)

    @staticmethod
    def custom(d: int, components) -> "MetricField":
        MetricField._check_dim(d)
        comps = [[exprlang.parse(c, d) if isinstance(c, str) else c
                  for c in row] for row in components]
        if len(comps) != d or any(len(row) != d for row in comps):
            raise ValueError(f"need a {d}x{d} component matrix")

        def comp_jets(X):
            B = X.shape[0]
            g = np.empty((B, d, d))
            dg = np.empty((B, d, d, d))
            d2g = np.empty((B, d, d, d, d))
            coords = jets.seed(X)
            for i in range(d):
                for j in range(d):
                    jt = exprlang._eval(comps[i][j], coords, d)
                    g[:, i, j] = jt.value
                    dg[:, i, j, :] = jt.gradient
                    d2g[:, i, j, :, :] = jt.hessian
            return g, dg, d2g

        return MetricField(d, "custom", _General(d, comp_jets))

    # -- batched evaluation helpers (used by flow/expmap/spiral) ----------

    def metric(self, X):
        X, single = _as_batch(X)
        g = self.profile.metric(X)
        return g[0] if single else g

    def inner(self, x, v, w):
        g = self.metric(x)
        return float(np.asarray(v) @ g @ np.asarray(w))

    def norm(self, x, v):
        return float(np.sqrt(max(self.inner(x, v, v), 0.0)))

    def frame(self, x, first=None):
        """g-orthonormal frame at x (rows); ``first`` is kept as row 0."""
        g = self.metric(x)
        cands = []
        if first is not None:
            cands.append(np.asarray(first, dtype=float))
        cands.extend(_eye(self.d))
        rows = []
        for v in cands:
            w = v.copy()
            for e in rows:
                w = w - (e @ g @ w) * e
            n2 = w @ g @ w
            if n2 > 1e-20:
                rows.append(w / np.sqrt(n2))
            if len(rows) == self.d:
                break
        return np.array(rows)


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def eval_metric(M: MetricField, x):
    """Evaluate (g_ab, g^ab) at x; raises on non-PD or out-of-chart points."""
    X, single = _as_batch(x)
    if not np.all(np.isfinite(X)):
        raise ValueError("chart point has non-finite entries")
    if X.shape[-1] != M.d:
        raise ValueError(f"point has length {X.shape[-1]}, metric has d={M.d}")
    M.profile.check_domain(X)
    g = M.profile.metric(X)
    ginv = M.profile.metric_inv(X)
    resid = np.max(np.abs(np.einsum('Bij,Bjk->Bik', g, ginv) - _eye(M.d)))
    if resid > 1e-12 * (1.0 + np.max(np.abs(g))):
        raise NotPositiveDefinite(f"inverse check failed (residual {resid:g})")
    if single:
        return g[0], ginv[0]
    return g, ginv


@dataclass(frozen=True)
class CurvatureData:
    """Christoffel symbols and curvature through the Schouten tensor at a point."""

    christoffel: np.ndarray   # Gamma^a_{bc}, shape (d, d, d)
    ricci: np.ndarray         # Ric_ab
    scalar: float             # scalar curvature
    schouten: np.ndarray      # L_ab
    schouten_endo: np.ndarray  # L^a_b = g^{ac} L_cb


def curvature(M: MetricField, x) -> CurvatureData:
    """Curvature quantities of the conformal geodesic equation at x."""
    X, single = _as_batch(x)
    gamma, ric, scal, L, lsharp = M.profile.curvature_batch(X)
    if not single:
        raise ValueError("curvature() takes a single point; "
                         "use M.profile.curvature_batch for batches")
    return CurvatureData(gamma[0], ric[0], float(scal[0]), L[0], lsharp[0])


def conformal_rescale(M: MetricField, omega) -> MetricField:
    """Metric with components Omega(x)^2 g_ab(x) and correctly composed jets.

    The result always evaluates curvature through the generic component
    pipeline, independently of the transformation rule in
    :func:`transform_conformal_data`, so the two stay cross-checkable.
    """
    factor = _coerce_factor(omega, M.d)
    base = M.profile
    d = M.d

    def comp_jets(X):
        w, dw, d2w = factor.jets(X)
        g, dg, d2g = base.component_jets(X)
        w2 = (w * w)[:, None, None]
        ww = 2.0 * (w[:, None] * dw)
        val = w2 * g
        dgh = (ww[:, None, None, :] * g[:, :, :, None] + w2[..., None] * dg)
        hess_w2 = 2.0 * (dw[:, :, None] * dw[:, None, :] + w[:, None, None] * d2w)
        d2gh = (hess_w2[:, None, None, :, :] * g[:, :, :, None, None]
                + ww[:, None, None, :, None] * dg[:, :, :, None, :]
                + ww[:, None, None, None, :] * dg[:, :, :, :, None]
                + w2[..., None, None] * d2g)
        return val, dgh, d2gh

    profile = _General(d, comp_jets, domain=base.check_domain)
    return MetricField(d, f"rescaled({M.kind})", profile,
                       radius=M.radius, omega=factor)


def transform_conformal_data(M: MetricField, omega, x, u, a):
    """Push (u, a, L) through the conformal change g -> Omega^2 g at x.

    Requires g(u,u)=1 and g(u,a)=0 at x; returns (u_hat, a_hat, L_hat) where

        u_hat = Omega^-1 u
        a_hat = Omega^-2 (a - Upsilon^# + Upsilon(u) u)
        L_hat = L - grad(Upsilon) + Upsilon (x) Upsilon - 1/2 |Upsilon|^2 g
    """
    factor = _coerce_factor(omega, M.d)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    g, ginv = eval_metric(M, x)
    uu = u @ g @ u
    ua = u @ g @ a
    if abs(uu - 1.0) > 1e-8 or abs(ua) > 1e-8:
        raise ConstraintViolation(
            f"need g(u,u)=1 and g(u,a)=0; got {uu:.3e}, {ua:.3e}")
    X = x[None, :]
    w, dw, d2w = factor.jets(X)
    w0 = w[0]
    ups = dw[0] / w0
    dups = d2w[0] / w0 - np.outer(dw[0], dw[0]) / w0**2
    curv = curvature(M, x)
    # covariant derivative of the exact one-form Upsilon
    nabla_ups = dups - np.einsum('cab,c->ab', curv.christoffel, ups)
    ups_sharp = ginv @ ups
    u_hat = u / w0
    a_hat = (a - ups_sharp + (ups @ u) * u) / w0**2
    L_hat = (curv.schouten - nabla_ups + np.outer(ups, ups)
             - 0.5 * (ups @ ginv @ ups) * g)
    return u_hat, a_hat, L_hat
