"""Arithmetic expressions in the single time variable ``s``.

Kernels and control densities are entered as strings such as ``"sin(2*pi*s)^2"``
or ``"1-(1-s)^2"``.  The grammar:

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | 's' | 'pi' | 'e' | NAME '(' expr (',' expr)* ')'
            | '(' expr ')'

``^`` binds tighter than ``*`` and ``/``; unary minus binds looser than ``^``,
so ``-s^2`` means ``-(s^2)``.  Known functions: sin, cos, tan, exp, log, sqrt,
abs, min, max (min and max take two or more arguments).

Parsing produces an immutable tree.  ``format_expression`` renders a tree back
to a string that re-parses to a structurally identical tree.  ``evaluate``
accepts a float or a numpy array for ``s`` and either returns finite values or
raises :class:`EvalDomainError` naming the offending sub-expression.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class ExpressionError(ValueError):
    """Base class for expression failures."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed source text.  ``offset`` is the byte position of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExpressionSyntaxError):
    """An identifier other than s, pi, e, or a known function name."""


class EvalDomainError(ExpressionError):
    """Evaluation left the domain (log of a non-positive value, etc.)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    """The time variable ``s``."""


@dataclass(frozen=True)
class Const:
    name: str  # "pi" or "e"


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expression", ...]


Expression = Union[Num, Var, Const, Neg, BinOp, Call]

_CONSTANTS = {"pi": math.pi, "e": math.e}
# name -> (min arity, max arity or None for unbounded)
_FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "tan": (1, 1),
    "exp": (1, 1),
    "log": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str):
        kind, value, offset = self.peek()
        if kind != "op" or value != symbol:
            raise ExpressionSyntaxError(f"expected {symbol!r}", offset)
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {value!r}", offset)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = BinOp(value, node, self.term())
            else:
                return node

    def term(self) -> Expression:
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = BinOp(value, node, self.unary())
            else:
                return node

    def unary(self) -> Expression:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, value, offset = self.advance()
        if kind == "number":
            return Num(float(value))
        if kind == "name":
            if value == "s":
                return Var()
            if value in _CONSTANTS:
                return Const(value)
            if value in _FUNCTIONS:
                lo, hi = _FUNCTIONS[value]
                self.expect_op("(")
                args = [self.expr()]
                while True:
                    k, v, _ = self.peek()
                    if k == "op" and v == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ExpressionSyntaxError(
                        f"{value} expects {lo}{'' if hi == lo else ' or more'} "
                        f"argument{'s' if lo != 1 else ''}, got {len(args)}",
                        offset,
                    )
                return Call(value, tuple(args))
            raise UnknownIdentifierError(f"unknown identifier {value!r}", offset)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise ExpressionSyntaxError(f"expected a value, found {what}", offset)


def parse(text: str) -> Expression:
    """Parse source text into an expression tree."""
    return _Parser(text).parse()


# Precedence levels used by the printer.  A child is parenthesized when its
# level is below the minimum its slot in the grammar accepts.
_ADD, _MUL, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


def _level(node: Expression) -> int:
    if isinstance(node, (Num, Var, Const, Call)):
        return _ATOM
    if isinstance(node, Neg):
        return _UNARY
    if node.op == "^":
        return _POW
    if node.op in "*/":
        return _MUL
    return _ADD


def _wrap(node: Expression, slot_min: int) -> str:
    text = format_expression(node)
    if _level(node) < slot_min:
        return f"({text})"
    return text


def format_expression(node: Expression) -> str:
    """Render a tree to source text that re-parses to the identical tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return "s"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _UNARY)
    if isinstance(node, Call):
        return node.name + "(" + ", ".join(format_expression(a) for a in node.args) + ")"
    if node.op == "^":
        return _wrap(node.left, _ATOM) + "^" + _wrap(node.right, _UNARY)
    if node.op in "*/":
        return _wrap(node.left, _MUL) + node.op + _wrap(node.right, _UNARY)
    return _wrap(node.left, _ADD) + node.op + _wrap(node.right, _MUL)


def substitute(node: Expression, replacement: Expression) -> Expression:
    """Replace every occurrence of the variable ``s`` with ``replacement``."""
    if isinstance(node, Var):
        return replacement
    if isinstance(node, (Num, Const)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, replacement))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, replacement), substitute(node.right, replacement))
    return Call(node.name, tuple(substitute(a, replacement) for a in node.args))


def _fail(node: Expression, reason: str):
    raise EvalDomainError(f"{reason} in '{format_expression(node)}'")


def _eval(node: Expression, s: np.ndarray):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return s
    if isinstance(node, Const):
        return _CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, s)
    if isinstance(node, BinOp):
        left = _eval(node.left, s)
        right = _eval(node.right, s)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            if np.any(np.asarray(right) == 0.0):
                _fail(node, "division by zero")
            return left / right
        base = np.asarray(left, dtype=float)
        expo = np.asarray(right, dtype=float)
        if np.any((base < 0.0) & (expo != np.floor(expo))):
            _fail(node, "negative base with non-integer exponent")
        if np.any((base == 0.0) & (expo < 0.0)):
            _fail(node, "zero base with negative exponent")
        out = np.power(base, expo)
        if not np.all(np.isfinite(out)):
            _fail(node, "overflow")
        return out
    arg = _eval(node.args[0], s)
    if node.name == "sin":
        return np.sin(arg)
    if node.name == "cos":
        return np.cos(arg)
    if node.name == "tan":
        return np.tan(arg)
    if node.name == "exp":
        out = np.exp(arg)
        if not np.all(np.isfinite(out)):
            _fail(node, "overflow")
        return out
    if node.name == "log":
        if np.any(np.asarray(arg) <= 0.0):
            _fail(node, "log of a non-positive value")
        return np.log(arg)
    if node.name == "sqrt":
        if np.any(np.asarray(arg) < 0.0):
            _fail(node, "sqrt of a negative value")
        return np.sqrt(arg)
    if node.name == "abs":
        return np.abs(arg)
    rest = [_eval(a, s) for a in node.args[1:]]
    out = arg
    for other in rest:
        out = np.minimum(out, other) if node.name == "min" else np.maximum(out, other)
    return out


def evaluate(expression: Expression | str, s):
    """Evaluate at ``s`` (float or array).  Returns float for scalar input."""
    if isinstance(expression, str):
        expression = parse(expression)
    arr = np.asarray(s, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(expression, arr)
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvalDomainError(
            f"non-finite result from '{format_expression(expression)}'"
        )
    if np.ndim(s) == 0:
        return float(out)
    return np.ascontiguousarray(np.broadcast_to(out, arr.shape))
