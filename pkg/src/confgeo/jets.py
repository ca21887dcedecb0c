"""Second-order forward-mode jets.

A :class:`Jet2` carries a value together with its exact gradient and Hessian
with respect to the chart coordinates.  Arithmetic propagates both derivative
orders, so metric components and conformal factors evaluate to machine-exact
second derivatives (finite differences are kept only as a test oracle).

All fields broadcast over leading batch axes: ``value`` has shape ``(...,)``,
``gradient`` shape ``(..., d)`` and ``hessian`` shape ``(..., d, d)``.
Instances are immutable; every operation allocates a new jet.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvalDomainError


@dataclass(frozen=True)
class Jet2:
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    # -- helpers ---------------------------------------------------------

    @property
    def is_constant(self) -> bool:
        return not (np.any(self.gradient) or np.any(self.hessian))

    def _outer(self):
        g = self.gradient
        return g[..., :, None] * g[..., None, :]

    def _chain(self, h0, h1, h2) -> "Jet2":
        """Compose with an outer function given h(v), h'(v), h''(v)."""
        grad = np.asarray(h1)[..., None] * self.gradient
        hess = (np.asarray(h1)[..., None, None] * self.hessian
                + np.asarray(h2)[..., None, None] * self._outer())
        return Jet2(np.asarray(h0), grad, hess)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Jet2):
            return Jet2(self.value + other, self.gradient, self.hessian)
        return Jet2(self.value + other.value,
                    self.gradient + other.gradient,
                    self.hessian + other.hessian)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.gradient, -self.hessian)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet2) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            c = np.asarray(other)
            return Jet2(self.value * c, self.gradient * c[..., None],
                        self.hessian * c[..., None, None])
        v1, v2 = self.value, other.value
        g1, g2 = self.gradient, other.gradient
        cross = g1[..., :, None] * g2[..., None, :]
        return Jet2(v1 * v2,
                    g1 * v2[..., None] + g2 * v1[..., None],
                    self.hessian * v2[..., None, None]
                    + other.hessian * v1[..., None, None]
                    + cross + np.swapaxes(cross, -1, -2))

    __rmul__ = __mul__

    def _reciprocal(self):
        v = self.value
        if np.any(v == 0.0):
            raise EvalDomainError("division by zero")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet2):
            return self * (1.0 / np.asarray(other))
        return self * other._reciprocal()

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def __pow__(self, other):
        if isinstance(other, Jet2):
            if other.is_constant:
                return self._pow_const(other.value)
            # general exponent: a^b = exp(b*log(a)), needs a > 0
            return exp(other * log(self))
        return self._pow_const(other)

    def _pow_const(self, c):
        c = float(c)
        if c == 0.0:
            # covers 0^0 = 1 by the documented convention
            one = np.ones_like(self.value)
            return Jet2(one, np.zeros_like(self.gradient),
                        np.zeros_like(self.hessian))
        if c == 1.0:
            return self
        v = self.value
        if c == int(c):
            n = int(c)
            if n < 0 and np.any(v == 0.0):
                raise EvalDomainError("zero raised to a negative power")
            if n >= 2:
                return self._chain(v**n, n * v**(n - 1), n * (n - 1) * v**(n - 2))
            return self._chain(v**n, n * v**(n - 1), n * (n - 1) * v**(n - 2))
        if np.any(v <= 0.0):
            raise EvalDomainError("non-integer power of a non-positive base")
        return self._chain(v**c, c * v**(c - 1), c * (c - 1) * v**(c - 2))


def constant(c, d: int) -> Jet2:
    """Jet of a constant in ``d`` variables."""
    return Jet2(np.asarray(float(c)), np.zeros(d), np.zeros((d, d)))


def seed(x: np.ndarray) -> list[Jet2]:
    """Coordinate jets at ``x`` of shape ``(d,)`` or batched ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    jets = []
    for i in range(d):
        g = np.zeros(d)
        g[i] = 1.0
        jets.append(Jet2(x[..., i], g, np.zeros((d, d))))
    return jets


# -- elementary functions (accept Jet2 or plain arrays) -------------------

def _as_jet_fn(plain):
    def wrap(fn):
        def call(v):
            if isinstance(v, Jet2):
                return fn(v)
            return plain(v)
        call.__name__ = fn.__name__
        return call
    return wrap


@_as_jet_fn(np.exp)
def exp(j):
    e = np.exp(j.value)
    return j._chain(e, e, e)


@_as_jet_fn(np.log)
def log(j):
    v = j.value
    if np.any(v <= 0.0):
        raise EvalDomainError("log of a non-positive value")
    return j._chain(np.log(v), 1.0 / v, -1.0 / v**2)


@_as_jet_fn(np.sin)
def sin(j):
    s, c = np.sin(j.value), np.cos(j.value)
    return j._chain(s, c, -s)


@_as_jet_fn(np.cos)
def cos(j):
    s, c = np.sin(j.value), np.cos(j.value)
    return j._chain(c, -s, -c)


@_as_jet_fn(np.sqrt)
def sqrt(j):
    v = j.value
    if np.any(v <= 0.0):
        raise EvalDomainError("sqrt of a non-positive value")
    r = np.sqrt(v)
    return j._chain(r, 0.5 / r, -0.25 / (v * r))


@_as_jet_fn(np.tanh)
def tanh(j):
    t = np.tanh(j.value)
    s2 = 1.0 - t * t
    return j._chain(t, s2, -2.0 * t * s2)


FUNCTIONS = {"exp": exp, "log": log, "sin": sin, "cos": cos,
             "sqrt": sqrt, "tanh": tanh}
