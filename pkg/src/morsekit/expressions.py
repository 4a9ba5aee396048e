"""Closed-form scalar fields with exact first and second derivatives.

Expression grammar: coordinates ``x1 .. xn``, numeric literals, ``+ - * /``,
integer powers ``^``, parentheses, ``exp(...)`` and ``hinge3(...)``, where
``hinge3(u) = max(u, 0)^3`` is the C^2 one-sided penalty used to build region
and cutoff fields.

Evaluation propagates (value, gradient, Hessian) triples forward through the
expression tree, vectorized over a batch of points.  Shared subtrees are
evaluated once per call, so fields assembled by composition stay cheap even
when the same building block appears many times.

Serialization round-trips exactly: ``parse(field.to_text())`` reproduces the
tree node for node, with numeric literals preserved bit for bit (literals are
printed with ``repr``, the shortest digit string that recovers the double).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationDomainError, ExpressionError

__all__ = ["ScalarField", "parse_expression", "partial_derivative"]


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    axis: int  # 0-based; prints as x{axis+1}


@dataclass(frozen=True)
class Add(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Sub(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Mul(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Div(Node):
    a: Node
    b: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Neg(Node):
    a: Node


@dataclass(frozen=True)
class Exp(Node):
    a: Node


@dataclass(frozen=True)
class Hinge3(Node):
    a: Node


# ---------------------------------------------------------------------------
# Smart constructors (used by field algebra and symbolic differentiation;
# the parser never folds, so user text keeps its structure)
# ---------------------------------------------------------------------------

def _const(v) -> Const:
    return Const(float(v))


def _is_const(n: Node, v: float | None = None) -> bool:
    return isinstance(n, Const) and (v is None or n.value == v)


def _add(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_const(a) and _is_const(b):
        return _const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return _const(0.0)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _neg(a: Node) -> Node:
    if _is_const(a):
        return _const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def _pow(base: Node, k: int) -> Node:
    if k == 0:
        return _const(1.0)
    if k == 1:
        return base
    if _is_const(base):
        return _const(base.value ** k)
    return Pow(base, k)


# ---------------------------------------------------------------------------
# Symbolic partial derivative (for constraint fields; stays in the grammar)
# ---------------------------------------------------------------------------

def _derive(node: Node, axis: int) -> Node:
    if isinstance(node, Const):
        return _const(0.0)
    if isinstance(node, Var):
        return _const(1.0 if node.axis == axis else 0.0)
    if isinstance(node, Add):
        return _add(_derive(node.a, axis), _derive(node.b, axis))
    if isinstance(node, Sub):
        return _sub(_derive(node.a, axis), _derive(node.b, axis))
    if isinstance(node, Mul):
        return _add(_mul(_derive(node.a, axis), node.b),
                    _mul(node.a, _derive(node.b, axis)))
    if isinstance(node, Div):
        num = _sub(_mul(_derive(node.a, axis), node.b),
                   _mul(node.a, _derive(node.b, axis)))
        return _div(num, _pow(node.b, 2))
    if isinstance(node, Pow):
        return _mul(_mul(_const(node.exponent), _pow(node.base, node.exponent - 1)),
                    _derive(node.base, axis))
    if isinstance(node, Neg):
        return _neg(_derive(node.a, axis))
    if isinstance(node, Exp):
        return _mul(node, _derive(node.a, axis))
    if isinstance(node, Hinge3):
        raise ExpressionError("symbolic derivative of hinge3 is not supported")
    raise TypeError(f"unknown node {type(node).__name__}")


# ---------------------------------------------------------------------------
# Forward jet evaluation (batched)
# ---------------------------------------------------------------------------

def _outer(ga: np.ndarray, gb: np.ndarray) -> np.ndarray:
    return ga[:, :, None] * gb[:, None, :]


def _jet(node: Node, pts: np.ndarray, order: int, memo: dict):
    """Return (value, grad, hess) arrays for `node` over pts (N, n).

    grad is None for order < 1, hess is None for order < 2.  Results are
    memoized by node identity so shared subtrees evaluate once.
    """
    key = id(node)
    hit = memo.get(key)
    if hit is not None:
        return hit

    N, n = pts.shape
    g = h = None

    if isinstance(node, Const):
        v = np.full(N, node.value)
        if order >= 1:
            g = np.zeros((N, n))
        if order >= 2:
            h = np.zeros((N, n, n))
    elif isinstance(node, Var):
        v = pts[:, node.axis].copy()
        if order >= 1:
            g = np.zeros((N, n))
            g[:, node.axis] = 1.0
        if order >= 2:
            h = np.zeros((N, n, n))
    elif isinstance(node, (Add, Sub)):
        va, ga, ha = _jet(node.a, pts, order, memo)
        vb, gb, hb = _jet(node.b, pts, order, memo)
        sgn = 1.0 if isinstance(node, Add) else -1.0
        v = va + sgn * vb
        if order >= 1:
            g = ga + sgn * gb
        if order >= 2:
            h = ha + sgn * hb
    elif isinstance(node, Mul):
        va, ga, ha = _jet(node.a, pts, order, memo)
        vb, gb, hb = _jet(node.b, pts, order, memo)
        v = va * vb
        if order >= 1:
            g = va[:, None] * gb + vb[:, None] * ga
        if order >= 2:
            h = (va[:, None, None] * hb + vb[:, None, None] * ha
                 + _outer(ga, gb) + _outer(gb, ga))
    elif isinstance(node, Div):
        va, ga, ha = _jet(node.a, pts, order, memo)
        vb, gb, hb = _jet(node.b, pts, order, memo)
        v = va / vb
        if order >= 1:
            g = (ga - v[:, None] * gb) / vb[:, None]
        if order >= 2:
            h = (ha - v[:, None, None] * hb - _outer(g, gb) - _outer(gb, g)) \
                / vb[:, None, None]
    elif isinstance(node, Pow):
        va, ga, ha = _jet(node.base, pts, order, memo)
        k = node.exponent
        v = va ** k
        if order >= 1:
            vk1 = va ** (k - 1)
            g = k * vk1[:, None] * ga
        if order >= 2:
            vk2 = va ** (k - 2)
            h = (k * (k - 1)) * vk2[:, None, None] * _outer(ga, ga) \
                + k * vk1[:, None, None] * ha
    elif isinstance(node, Neg):
        va, ga, ha = _jet(node.a, pts, order, memo)
        v = -va
        if order >= 1:
            g = -ga
        if order >= 2:
            h = -ha
    elif isinstance(node, Exp):
        va, ga, ha = _jet(node.a, pts, order, memo)
        v = np.exp(va)
        if order >= 1:
            g = v[:, None] * ga
        if order >= 2:
            h = v[:, None, None] * (ha + _outer(ga, ga))
    elif isinstance(node, Hinge3):
        va, ga, ha = _jet(node.a, pts, order, memo)
        p = np.maximum(va, 0.0)
        v = p ** 3
        if order >= 1:
            g = (3.0 * p * p)[:, None] * ga
        if order >= 2:
            h = (6.0 * p)[:, None, None] * _outer(ga, ga) \
                + (3.0 * p * p)[:, None, None] * ha
    else:
        raise TypeError(f"unknown node {type(node).__name__}")

    out = (v, g, h)
    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCTIONS = ("exp", "hinge3")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []  # (kind, value, offset)
        while self.pos < len(text):
            m = _TOKEN_RE.match(text, self.pos)
            if m is None or m.end() == self.pos:
                # skip over whitespace-only tail
                rest = text[self.pos:]
                if rest.strip() == "":
                    break
                line, col = _line_col(text, self.pos + len(rest) - len(rest.lstrip()))
                raise ExpressionError(
                    f"unexpected character {rest.lstrip()[0]!r}", line, col)
            off = m.start() + len(m.group(0)) - len(m.group(0).lstrip())
            if m.group("num") is not None:
                self.tokens.append(("num", m.group("num"), off))
            elif m.group("ident") is not None:
                self.tokens.append(("ident", m.group("ident"), off))
            else:
                self.tokens.append(("op", m.group("op"), off))
            self.pos = m.end()
        self.tokens.append(("eof", "", len(text)))
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    last_nl = text.rfind("\n", 0, offset)
    col = offset - last_nl
    return line, col


class _Parser:
    """Recursive descent over: expr > term > unary > power > atom."""

    def __init__(self, text: str, ambient_dim: int):
        self.text = text
        self.n = ambient_dim
        self.toks = _Tokenizer(text)

    def fail(self, message: str, offset: int):
        line, col = _line_col(self.text, offset)
        raise ExpressionError(message, line, col)

    def parse(self) -> Node:
        node = self.expr()
        kind, value, off = self.toks.peek()
        if kind != "eof":
            self.fail(f"unexpected token {value!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, value, _ = self.toks.peek()
            if kind == "op" and value in "+-":
                self.toks.next()
                rhs = self.term()
                node = Add(node, rhs) if value == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, value, _ = self.toks.peek()
            if kind == "op" and value in "*/":
                self.toks.next()
                rhs = self.unary()
                node = Mul(node, rhs) if value == "*" else Div(node, rhs)
            else:
                return node

    def unary(self) -> Node:
        kind, value, _ = self.toks.peek()
        if kind == "op" and value == "-":
            self.toks.next()
            inner = self.unary()
            # fold a literal sign so printed negative constants re-parse
            # to the identical tree
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, value, off = self.toks.peek()
        if kind == "op" and value == "^":
            self.toks.next()
            exponent = self.integer_exponent()
            return Pow(base, exponent)
        return base

    def integer_exponent(self) -> int:
        sign = 1
        kind, value, off = self.toks.peek()
        if kind == "op" and value == "-":
            self.toks.next()
            sign = -1
            kind, value, off = self.toks.peek()
        if kind != "num":
            self.fail("expected integer exponent after '^'", off)
        self.toks.next()
        if not re.fullmatch(r"\d+", value):
            self.fail(f"exponent must be an integer, got {value!r}", off)
        return sign * int(value)

    def atom(self) -> Node:
        kind, value, off = self.toks.next()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            if value in _FUNCTIONS:
                k2, v2, o2 = self.toks.next()
                if not (k2 == "op" and v2 == "("):
                    self.fail(f"expected '(' after {value}", o2)
                arg = self.expr()
                k3, v3, o3 = self.toks.next()
                if not (k3 == "op" and v3 == ")"):
                    self.fail("expected ')'", o3)
                return Exp(arg) if value == "exp" else Hinge3(arg)
            m = re.fullmatch(r"x(\d+)", value)
            if m is None:
                self.fail(f"unknown identifier {value!r}", off)
            i = int(m.group(1))
            if not 1 <= i <= self.n:
                self.fail(f"coordinate {value} out of range 1..{self.n}", off)
            return Var(i - 1)
        if kind == "op" and value == "(":
            node = self.expr()
            k2, v2, o2 = self.toks.next()
            if not (k2 == "op" and v2 == ")"):
                self.fail("expected ')'", o2)
            return node
        if kind == "eof":
            self.fail("unexpected end of expression", off)
        self.fail(f"unexpected token {value!r}", off)


def parse_expression(text: str, ambient_dim: int) -> Node:
    return _Parser(text, ambient_dim).parse()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(node: Node) -> int:
    if isinstance(node, (Add, Sub)):
        return _PREC_ADD
    if isinstance(node, (Mul, Div)):
        return _PREC_MUL
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Pow):
        return _PREC_POW
    if isinstance(node, Const) and node.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(node: Node, minimum: int) -> str:
    s = _to_text(node)
    return f"({s})" if _precedence(node) < minimum else s


def _to_text(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.axis + 1}"
    if isinstance(node, Add):
        return f"{_wrap(node.a, _PREC_ADD)} + {_wrap(node.b, _PREC_ADD + 1)}"
    if isinstance(node, Sub):
        return f"{_wrap(node.a, _PREC_ADD)} - {_wrap(node.b, _PREC_ADD + 1)}"
    if isinstance(node, Mul):
        return f"{_wrap(node.a, _PREC_MUL)}*{_wrap(node.b, _PREC_MUL + 1)}"
    if isinstance(node, Div):
        return f"{_wrap(node.a, _PREC_MUL)}/{_wrap(node.b, _PREC_MUL + 1)}"
    if isinstance(node, Neg):
        return f"-{_wrap(node.a, _PREC_NEG)}"
    if isinstance(node, Pow):
        return f"{_wrap(node.base, _PREC_ATOM)}^{node.exponent}"
    if isinstance(node, Exp):
        return f"exp({_to_text(node.a)})"
    if isinstance(node, Hinge3):
        return f"hinge3({_to_text(node.a)})"
    raise TypeError(f"unknown node {type(node).__name__}")


# ---------------------------------------------------------------------------
# ScalarField
# ---------------------------------------------------------------------------

def _as_points(pts, n: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise ValueError(f"point has {arr.shape[0]} coordinates, expected {n}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"points must have shape (N, {n}), got {arr.shape}")
    return arr, False


class ScalarField:
    """A twice-differentiable closed-form function of the ambient coordinates.

    Supports arithmetic (``+ - * /``, integer ``**``, unary ``-``) with other
    fields and numbers, producing new fields.  Evaluation is vectorized:
    ``value`` returns values only, ``jet`` returns values plus exact gradients
    and Hessians.
    """

    __slots__ = ("node", "ambient_dim")

    def __init__(self, node: Node, ambient_dim: int):
        self.node = node
        self.ambient_dim = int(ambient_dim)

    # -- construction -------------------------------------------------------

    @classmethod
    def parse(cls, text: str, ambient_dim: int) -> "ScalarField":
        return cls(parse_expression(text, ambient_dim), ambient_dim)

    @classmethod
    def coordinate(cls, index: int, ambient_dim: int) -> "ScalarField":
        """Coordinate function x{index}; index is 1-based to match x1..xn."""
        if not 1 <= index <= ambient_dim:
            raise ValueError(f"coordinate index {index} out of range 1..{ambient_dim}")
        return cls(Var(index - 1), ambient_dim)

    @classmethod
    def constant(cls, value: float, ambient_dim: int) -> "ScalarField":
        return cls(_const(value), ambient_dim)

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        return _to_text(self.node)

    def __repr__(self) -> str:
        text = self.to_text()
        if len(text) > 60:
            text = text[:57] + "..."
        return f"ScalarField({text!r}, n={self.ambient_dim})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.ambient_dim == other.ambient_dim and self.node == other.node

    def __hash__(self):
        return hash((id(self.node), self.ambient_dim))

    # -- evaluation ---------------------------------------------------------

    def value(self, pts) -> np.ndarray | float:
        arr, single = _as_points(pts, self.ambient_dim)
        with np.errstate(all="ignore"):
            v, _, _ = _jet(self.node, arr, 0, {})
        return float(v[0]) if single else v

    def value_grad(self, pts):
        arr, single = _as_points(pts, self.ambient_dim)
        with np.errstate(all="ignore"):
            v, g, _ = _jet(self.node, arr, 1, {})
        if single:
            return float(v[0]), g[0]
        return v, g

    def jet(self, pts):
        """Values, gradients and Hessians over a batch of points."""
        arr, single = _as_points(pts, self.ambient_dim)
        with np.errstate(all="ignore"):
            v, g, h = _jet(self.node, arr, 2, {})
        if single:
            return float(v[0]), g[0], h[0]
        return v, g, h

    def evaluate_checked(self, pts):
        """Single-point evaluation that raises on non-finite results."""
        v = self.value(pts)
        if not np.all(np.isfinite(v)):
            raise EvaluationDomainError(
                f"expression is not finite at {np.asarray(pts).tolist()}")
        return v

    # -- algebra ------------------------------------------------------------

    def _coerce(self, other) -> Node:
        if isinstance(other, ScalarField):
            if other.ambient_dim != self.ambient_dim:
                raise ValueError("ambient dimensions differ")
            return other.node
        if isinstance(other, (int, float)):
            return _const(other)
        return NotImplemented

    def _binary(self, other, op, reflected=False):
        rhs = self._coerce(other)
        if rhs is NotImplemented:
            return NotImplemented
        a, b = (rhs, self.node) if reflected else (self.node, rhs)
        return ScalarField(op(a, b), self.ambient_dim)

    def __add__(self, other):
        return self._binary(other, _add)

    def __radd__(self, other):
        return self._binary(other, _add, reflected=True)

    def __sub__(self, other):
        return self._binary(other, _sub)

    def __rsub__(self, other):
        return self._binary(other, _sub, reflected=True)

    def __mul__(self, other):
        return self._binary(other, _mul)

    def __rmul__(self, other):
        return self._binary(other, _mul, reflected=True)

    def __truediv__(self, other):
        return self._binary(other, _div)

    def __rtruediv__(self, other):
        return self._binary(other, _div, reflected=True)

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("only integer powers are supported")
        return ScalarField(_pow(self.node, k), self.ambient_dim)

    def __neg__(self):
        return ScalarField(_neg(self.node), self.ambient_dim)


def exp_field(f: ScalarField) -> ScalarField:
    return ScalarField(Exp(f.node), f.ambient_dim)


def hinge3(f: ScalarField) -> ScalarField:
    """max(f, 0)^3: vanishes with two derivative tiers where f <= 0."""
    return ScalarField(Hinge3(f.node), f.ambient_dim)


def partial_derivative(f: ScalarField, axis: int) -> ScalarField:
    """Symbolic partial derivative along 0-based `axis`; stays in the grammar."""
    if not 0 <= axis < f.ambient_dim:
        raise ValueError(f"axis {axis} out of range 0..{f.ambient_dim - 1}")
    return ScalarField(_derive(f.node, axis), f.ambient_dim)
