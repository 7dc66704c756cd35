"""Expression language for metric entries, warping functions and fields.

Grammar (usual precedence, ``^`` right-associative and binding tighter than
unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are chart coordinates, named parameters (substituted by value when the
expression is parsed) or the constant ``pi``.  Functions: sin, cos, exp, log.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import jets
from .jets import Jet

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownSymbolError",
    "DomainError",
    "Num",
    "Coord",
    "Param",
    "Neg",
    "BinOp",
    "Call",
    "Expression",
    "parse_expression",
    "to_text",
    "evaluate",
    "eval_jet",
    "jet_of",
]

FUNCTIONS = ("sin", "cos", "exp", "log")


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}" + (f" in {text!r}" if text else ""))
        self.offset = offset


class UnknownSymbolError(ExpressionError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown symbol {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class DomainError(ExpressionError, ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    name: str
    index: int


@dataclass(frozen=True)
class Param:
    name: str
    value: float


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Coord, Param, Neg, BinOp, Call]


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the coordinate names it may use."""

    ast: Node
    coords: tuple[str, ...]
    params: tuple[tuple[str, float], ...] = ()

    def __str__(self) -> str:
        return to_text(self.ast)

    @property
    def text(self) -> str:
        return to_text(self.ast)

    def is_constant(self) -> bool:
        return not _uses_coords(self.ast)


def _uses_coords(node: Node) -> bool:
    if isinstance(node, Coord):
        return True
    if isinstance(node, Neg):
        return _uses_coords(node.operand)
    if isinstance(node, BinOp):
        return _uses_coords(node.left) or _uses_coords(node.right)
    if isinstance(node, Call):
        return _uses_coords(node.arg)
    return False


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, coords, params):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.coords = {c: k for k, c in enumerate(coords)}
        self.params = dict(params)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value:
            what = "end of input" if kind == "end" else repr(v)
            raise ExpressionSyntaxError(f"expected {value!r}, found {what}", pos, self.text)

    def parse(self):
        node = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {v!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, v, pos = self.take()
        if kind == "num":
            return Num(float(v))
        if kind == "name":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(v, arg)
            if self.peek()[1] == "(":
                raise UnknownSymbolError(v, pos)
            if v in self.coords:
                return Coord(v, self.coords[v])
            if v in self.params:
                return Param(v, float(self.params[v]))
            if v == "pi":
                return Param("pi", math.pi)
            raise UnknownSymbolError(v, pos)
        if v == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(v)
        raise ExpressionSyntaxError(f"unexpected {what}", pos, self.text)


def parse_expression(
    text: str | float | int,
    coords: Sequence[str],
    params: Mapping[str, float] | None = None,
) -> Expression:
    """Parse ``text`` over the coordinate names ``coords``.

    Raises :class:`ExpressionSyntaxError` (with byte offset) or
    :class:`UnknownSymbolError`.
    """
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    params = dict(params or {})
    clash = set(params) & set(coords)
    if clash:
        raise ExpressionError(f"names used both as coordinate and parameter: {sorted(clash)}")
    ast = _Parser(text, tuple(coords), params).parse()
    return Expression(ast, tuple(coords), tuple(sorted(params.items())))


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def to_text(node: Node) -> str:
    """Render with the minimal parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return s
    if isinstance(node, (Coord, Param)):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_text(node.arg)})"
    if isinstance(node, Neg):
        inner = node.operand
        s = to_text(inner)
        # -a^b parses as -(a^b); anything looser needs parentheses
        if _prec(inner) < _PREC["neg"] and not isinstance(inner, BinOp) or (
            isinstance(inner, BinOp) and inner.op != "^"
        ):
            s = f"({s})"
        return f"-{s}"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p or isinstance(node.left, Neg) or _negative_num(node.left):
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"] or _negative_num(node.right):
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left}{node.op}{right}" if node.op == "^" else f"{left} {node.op} {right}"


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 10


def _negative_num(node: Node) -> bool:
    return isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _eval(node: Node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Param):
        return node.value
    if isinstance(node, Coord):
        return env[node.index]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        a = _eval(node.arg, env)
        if node.fn == "log":
            if np.any(_value(a) <= 0):
                raise DomainError("log of a non-positive argument")
            return a.log() if isinstance(a, Jet) else np.log(a)
        if isinstance(a, Jet):
            return getattr(a, node.fn)()
        return getattr(np, node.fn)(a)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(_value(b) == 0):
            raise DomainError("division by zero")
        return a / b
    # power
    if isinstance(b, Jet) and not _uses_coords(node.right):
        b = float(np.asarray(b.val).flat[0])
    if isinstance(b, Jet):
        if np.any(_value(a) <= 0):
            raise DomainError("variable exponent needs a positive base")
        return a**b
    bf = float(b) if np.ndim(b) == 0 else None
    if bf is not None and not bf.is_integer() and np.any(_value(a) < 0):
        raise DomainError("fractional power of a negative number")
    if bf is not None and bf < 0 and np.any(_value(a) == 0):
        raise DomainError("negative power of zero")
    if isinstance(a, Jet):
        return a**bf if bf is not None else a**b
    with np.errstate(invalid="ignore"):
        return np.power(np.asarray(a, float), b)


def _value(x):
    return x.val if isinstance(x, Jet) else np.asarray(x)


def evaluate(expr: Expression, points) -> np.ndarray:
    """Plain values at points of shape ``(..., n)``."""
    pts = np.asarray(points, float)
    env = [pts[..., k] for k in range(pts.shape[-1])]
    with np.errstate(over="ignore"):
        out = _eval(expr.ast, env)
    return np.broadcast_to(np.asarray(out, float), pts.shape[:-1]).copy()


def jet_of(expr: Expression, coord_jets: Sequence[Jet]) -> Jet:
    """Jet of ``expr`` given the jets of the chart coordinates."""
    with np.errstate(over="ignore"):
        out = _eval(expr.ast, coord_jets)
    if not isinstance(out, Jet):
        ref = coord_jets[0]
        out = jets.constant(np.broadcast_to(np.asarray(out, float), ref.shape), ref.nvars, ref.order)
    return out


def eval_jet(expr: Expression, point, order: int = 3) -> jets.Jet3:
    """Value and all partials through order 3 at a single point."""
    point = np.asarray(point, float).reshape(1, -1)
    if point.shape[1] != len(expr.coords):
        raise ValueError(f"point has {point.shape[1]} coordinates, expression has {len(expr.coords)}")
    j = jet_of(expr, jets.coordinate_jets(point, order))[0]
    return jets.to_jet3(j)
