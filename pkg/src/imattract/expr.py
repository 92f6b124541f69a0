"""Scalar expressions in x, y (and t for parametric curves).

Expressions are parsed into a small immutable tree and evaluated with numpy,
either on plain values or on forward-mode dual numbers carrying the partial
derivatives with respect to x and y.

Grammar::

    expr    := term (("+"|"-") term)* ;
    term    := factor (("*"|"/") factor)* ;
    factor  := "-" factor | power ;
    power   := atom ("^" factor)? ;
    atom    := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")" ;
"""

from __future__ import annotations

import math
import re
from functools import lru_cache
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
FIELD_VARIABLES = ("x", "y")
CURVE_VARIABLES = ("t",)


@dataclass(frozen=True)
class Const:
    value: float
    name: str | None = None


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_OPERAND_START = frozenset({"NUMBER", "IDENT", "(", "-"})


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER, IDENT, an operator character, or END
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", byte_pos, _OPERAND_START)
        text = m.group()
        kind = m.lastgroup
        if kind == "number":
            tokens.append(_Token("NUMBER", text, byte_pos))
        elif kind == "ident":
            tokens.append(_Token("IDENT", text, byte_pos))
        elif kind == "op":
            tokens.append(_Token(text, text, byte_pos))
        byte_pos += len(text.encode("utf-8"))
        pos = m.end()
    tokens.append(_Token("END", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: tuple[str, ...]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        if self.tok.kind != kind:
            raise ExprSyntaxError(f"unexpected {self._describe(self.tok)}", self.tok.offset, frozenset({kind}))
        return self.advance()

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "END" else f"token {tok.text!r}"

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "END":
            raise ExprSyntaxError(
                f"unexpected {self._describe(self.tok)}",
                self.tok.offset,
                frozenset({"+", "-", "*", "/", "^", "END"}),
            )
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind in ("+", "-"):
            op = self.advance().kind
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.tok.kind in ("*", "/"):
            op = self.advance().kind
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.tok.kind == "-":
            self.advance()
            return Unary("neg", self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "^":
            self.advance()
            return Binary("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "NUMBER":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "IDENT":
            self.advance()
            if self.tok.kind == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifier(tok.text, tok.offset, frozenset(FUNCTIONS))
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ExprSyntaxError(f"function {tok.text!r} needs an argument", self.tok.offset, frozenset({"("}))
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text], tok.text)
            if tok.text in self.variables:
                return Var(tok.text)
            allowed = frozenset(self.variables) | frozenset(CONSTANTS) | frozenset(FUNCTIONS)
            raise UnknownIdentifier(tok.text, tok.offset, allowed)
        raise ExprSyntaxError(f"unexpected {self._describe(tok)}", tok.offset, _OPERAND_START)


def parse(source: str, variables: tuple[str, ...] = FIELD_VARIABLES) -> Expr:
    """Parse ``source`` into an expression tree.

    Only names in ``variables`` are accepted as variables; pass ``("t",)``
    for the components of a parametric curve.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, _OPERAND_START)
    return _Parser(source, tuple(variables)).parse()


def to_source(e: Expr) -> str:
    """Print ``e`` back to parseable text (fully parenthesized)."""
    if isinstance(e, Const):
        if e.name is not None:
            return e.name
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            return f"(-{repr(-e.value)})"
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.child)})"
        return f"{e.op}({to_source(e.child)})"
    return f"({to_source(e.left)} {e.op} {to_source(e.right)})"


@lru_cache(maxsize=4096)
def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_variables(e.child)
    return free_variables(e.left) | free_variables(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.child, mapping))
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


# -- dual numbers ----------------------------------------------------------


@dataclass(frozen=True)
class DualValue:
    """A value with its partial derivatives along x and y.

    Fields may be floats or numpy arrays of a common shape.
    """

    value: float
    dx: float
    dy: float

    def __add__(self, other: "DualValue") -> "DualValue":
        return DualValue(self.value + other.value, self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: "DualValue") -> "DualValue":
        return DualValue(self.value - other.value, self.dx - other.dx, self.dy - other.dy)

    def __mul__(self, other: "DualValue") -> "DualValue":
        return DualValue(
            self.value * other.value,
            self.dx * other.value + self.value * other.dx,
            self.dy * other.value + self.value * other.dy,
        )

    def __truediv__(self, other: "DualValue") -> "DualValue":
        q = self.value / other.value
        return DualValue(q, (self.dx - q * other.dx) / other.value, (self.dy - q * other.dy) / other.value)

    def __neg__(self) -> "DualValue":
        return DualValue(-self.value, -self.dx, -self.dy)

    def chain(self, value, slope) -> "DualValue":
        """Apply a scalar function with the given value and derivative."""
        return DualValue(value, slope * self.dx, slope * self.dy)


# -- evaluation ------------------------------------------------------------


class _Guard:
    """Accumulates domain violations elementwise."""

    def __init__(self):
        self.bad = False
        self.reason: str | None = None

    def check(self, violated, reason: str) -> None:
        violated = np.asarray(violated)
        if violated.any():
            self.bad = self.bad | violated
            if self.reason is None:
                self.reason = reason


@lru_cache(maxsize=1024)
def _constant_exponent(node: Expr) -> float | None:
    if free_variables(node):
        return None
    with np.errstate(all="ignore"):
        guard = _Guard()
        value = _value(node, {}, guard)
    if np.any(guard.bad) or not np.isfinite(value):
        return None
    return float(value)


def _is_integer(c: float) -> bool:
    return float(c).is_integer()


def _value(node: Expr, env, guard: _Guard):
    tp = type(node)
    if tp is Const:
        return np.float64(node.value)
    if tp is Var:
        return env[node.name]
    if tp is Unary:
        u = _value(node.child, env, guard)
        op = node.op
        if op == "neg":
            return -u
        if op == "sin":
            return np.sin(u)
        if op == "cos":
            return np.cos(u)
        if op == "exp":
            return np.exp(u)
        if op == "abs":
            return np.abs(u)
        if op == "ln":
            guard.check(u <= 0, "ln of non-positive argument")
            return np.log(u)
        if op == "sqrt":
            guard.check(u < 0, "sqrt of negative argument")
            return np.sqrt(u)
        raise ValueError(f"unknown unary op {op!r}")
    op = node.op
    a = _value(node.left, env, guard)
    if op == "^":
        c = _constant_exponent(node.right)
        if c is not None:
            _check_const_power(a, c, guard)
            return np.power(a, c)
        b = _value(node.right, env, guard)
        guard.check(a <= 0, "non-positive base with variable exponent")
        return np.power(a, b)
    b = _value(node.right, env, guard)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        guard.check(b == 0, "division by zero")
        return a / b
    raise ValueError(f"unknown binary op {op!r}")


def _check_const_power(base, c: float, guard: _Guard) -> None:
    if not _is_integer(c):
        guard.check(base < 0, "negative base with non-integer exponent")
    if c < 0:
        guard.check(base == 0, "zero base with negative exponent")


def _dual(node: Expr, env, guard: _Guard) -> DualValue:
    tp = type(node)
    if tp is Const:
        return DualValue(np.float64(node.value), 0.0, 0.0)
    if tp is Var:
        return env[node.name]
    if tp is Unary:
        u = _dual(node.child, env, guard)
        op = node.op
        v = u.value
        if op == "neg":
            return -u
        if op == "sin":
            return u.chain(np.sin(v), np.cos(v))
        if op == "cos":
            return u.chain(np.cos(v), -np.sin(v))
        if op == "exp":
            ev = np.exp(v)
            return u.chain(ev, ev)
        if op == "abs":
            return u.chain(np.abs(v), np.sign(v))
        if op == "ln":
            guard.check(v <= 0, "ln of non-positive argument")
            return u.chain(np.log(v), 1.0 / v)
        if op == "sqrt":
            guard.check(v < 0, "sqrt of negative argument")
            guard.check(v == 0, "sqrt not differentiable at zero")
            s = np.sqrt(v)
            return u.chain(s, 0.5 / s)
        raise ValueError(f"unknown unary op {op!r}")
    op = node.op
    a = _dual(node.left, env, guard)
    if op == "^":
        c = _constant_exponent(node.right)
        if c is not None:
            _check_const_power(a.value, c, guard)
            if c == 0:
                return a.chain(np.power(a.value, 0.0), 0.0)
            if not _is_integer(c) and c < 1:
                guard.check(a.value == 0, "power not differentiable at zero base")
            return a.chain(np.power(a.value, c), c * np.power(a.value, c - 1.0))
        b = _dual(node.right, env, guard)
        guard.check(a.value <= 0, "non-positive base with variable exponent")
        p = np.power(a.value, b.value)
        log_a = np.log(a.value)
        return DualValue(
            p,
            p * (b.dx * log_a + b.value * a.dx / a.value),
            p * (b.dy * log_a + b.value * a.dy / a.value),
        )
    b = _dual(node.right, env, guard)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        guard.check(b.value == 0, "division by zero")
        return a / b
    raise ValueError(f"unknown binary op {op!r}")


def _check_supplied(e: Expr, env: Mapping[str, object]) -> None:
    missing = free_variables(e) - set(env)
    if missing:
        raise ValueError(f"variables not supplied: {', '.join(sorted(missing))}")


def evaluate_many(e: Expr, env: Mapping[str, object]) -> tuple[np.ndarray, np.ndarray, str | None]:
    """Evaluate ``e`` elementwise over arrays.

    Returns ``(values, ok, reason)`` where ``ok`` flags the elements that
    evaluated inside every operation's domain to a finite result and
    ``reason`` describes the first violation found (or ``None``).
    """
    _check_supplied(e, env)
    arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
    return evaluate_arrays(e, arrays, shape)


def evaluate_arrays(e: Expr, arrays: Mapping[str, np.ndarray], shape: tuple[int, ...]):
    """Lean form of :func:`evaluate_many` for pre-converted float arrays of one shape."""
    guard = _Guard()
    with np.errstate(all="ignore"):
        out = _value(e, arrays, guard)
    if type(out) is not np.ndarray or out.shape != shape:
        out = np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
    ok = np.isfinite(out)
    if guard.bad is not False:
        ok &= ~np.broadcast_to(guard.bad, shape)
    reason = guard.reason
    if reason is None and not ok.all():
        reason = "non-finite result"
    return out, ok, reason


def evaluate_dual_many(e: Expr, env: Mapping[str, DualValue]) -> tuple[DualValue, np.ndarray, str | None]:
    """Dual-number counterpart of :func:`evaluate_many`.

    ``env`` maps variable names to DualValue seeds, so any variable can be
    routed to either derivative slot (e.g. ``t`` seeded as ``(t, 1, 0)``).
    """
    _check_supplied(e, env)
    seeds = {
        k: DualValue(np.asarray(v.value, float), np.asarray(v.dx, float), np.asarray(v.dy, float))
        for k, v in env.items()
    }
    shapes = [a.shape for d in seeds.values() for a in (d.value, d.dx, d.dy)]
    shape = np.broadcast_shapes(*shapes) if shapes else ()
    guard = _Guard()
    with np.errstate(all="ignore"):
        r = _dual(e, seeds, guard)
        out = DualValue(*(np.broadcast_to(np.asarray(c, dtype=float), shape).copy() for c in (r.value, r.dx, r.dy)))
    ok = np.isfinite(out.value) & np.isfinite(out.dx) & np.isfinite(out.dy)
    ok &= ~np.broadcast_to(np.asarray(guard.bad), shape)
    reason = guard.reason
    if reason is None and not ok.all():
        reason = "non-finite result"
    return out, ok, reason


def evaluate(e: Expr, x: float, y: float, t: float | None = None) -> float:
    """Evaluate ``e`` at a single point; raises DomainError off-domain."""
    env = {"x": x, "y": y}
    if t is not None:
        env["t"] = t
    value, ok, reason = evaluate_many(e, env)
    if not ok:
        point = (x, y) if t is None else (x, y, t)
        raise DomainError(reason or "evaluation failed", point)
    return float(value)


def evaluate_dual(e: Expr, x: float, y: float) -> DualValue:
    """Value and exact partial derivatives of ``e`` at ``(x, y)``."""
    env = {"x": DualValue(x, 1.0, 0.0), "y": DualValue(y, 0.0, 1.0)}
    out, ok, reason = evaluate_dual_many(e, env)
    if not ok:
        raise DomainError(reason or "evaluation failed", (x, y))
    return DualValue(float(out.value), float(out.dx), float(out.dy))
