"""Scalar expression language for metric components and conformal factors.

Grammar (standard precedence, ``^`` over unary ``-`` over ``*`` ``/`` over
``+`` ``-``; everything left-associative except ``^`` which is right):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | FUNC '(' expr ')' | VAR | '(' expr ')'

Variables are ``x1 .. xd``; functions are exp, log, sin, cos, sqrt, tanh.
``0^0`` evaluates to 1 with zero derivatives.  A general exponent ``a^b``
with non-constant ``b`` is evaluated as ``exp(b*log(a))`` and requires
``a > 0``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import ExprSyntaxError, UnknownIdentifier, VariableOutOfRange


# -- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Num | Var | Neg | Bin | Call


# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)

_VAR = re.compile(r"x([1-9][0-9]*)$")


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(src)))
    return tokens


# -- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str, d: int):
        self.tokens = _tokenize(src)
        self.d = d
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, text, pos = self.next()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                e = Bin(text, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                e = Bin(text, e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            m = _VAR.match(text)
            if m:
                idx = int(m.group(1))
                if idx > self.d:
                    raise VariableOutOfRange(
                        f"variable {text} exceeds dimension {self.d}")
                return Var(idx)
            if text in jets.FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            raise UnknownIdentifier(f"unknown identifier {text!r}")
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {text!r}" if text else "unexpected end of input", pos)


def parse(src: str, d: int) -> Expr:
    """Parse ``src`` into an expression tree over variables x1..xd."""
    return _Parser(src, d).parse()


# -- unparser ----------------------------------------------------------------

_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _unparse(e: Expr, parent_level: int, right_of: str | None = None) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.fn}({_unparse(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _unparse(e.arg, _LEVEL["neg"])
        return f"({s})" if parent_level > _LEVEL["neg"] else s
    lv = _LEVEL[e.op]
    if e.op == "^":
        s = _unparse(e.left, lv + 1) + "^" + _unparse(e.right, lv)
    else:
        sep = f" {e.op} " if lv == 1 else e.op
        # left associativity: the right child needs parens at equal level
        s = _unparse(e.left, lv) + sep + _unparse(e.right, lv + 1)
    return f"({s})" if parent_level > lv else s


def unparse(e: Expr) -> str:
    """Render ``e`` back to source; re-parsing gives a structurally equal tree."""
    return _unparse(e, 0)


# -- evaluation ----------------------------------------------------------------

def _eval(e: Expr, coords: list[jets.Jet2], d: int) -> jets.Jet2:
    if isinstance(e, Num):
        return jets.constant(e.value, d)
    if isinstance(e, Var):
        return coords[e.index - 1]
    if isinstance(e, Neg):
        return -_eval(e.arg, coords, d)
    if isinstance(e, Call):
        return jets.FUNCTIONS[e.fn](_eval(e.arg, coords, d))
    l = _eval(e.left, coords, d)
    r = _eval(e.right, coords, d)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    if e.op == "/":
        return l / r
    return l ** r


def eval_jet2(e: Expr, x) -> jets.Jet2:
    """Evaluate ``e`` at chart point(s) ``x`` of shape ``(d,)`` or ``(..., d)``.

    Returns the exact value/gradient/Hessian jet; raises
    :class:`~confgeo.errors.EvalDomainError` outside the expression's domain.
    """
    x = np.asarray(x, dtype=float)
    return _eval(e, jets.seed(x), x.shape[-1])


def variables_used(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Neg):
        return variables_used(e.arg)
    if isinstance(e, Call):
        return variables_used(e.arg)
    if isinstance(e, Bin):
        return variables_used(e.left) | variables_used(e.right)
    return set()
