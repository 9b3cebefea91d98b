"""Lagrangian expressions in the variables t, x<i>, xd<i>, xdd<i>.

Expressions are parsed into an immutable tree and evaluated on numpy arrays,
so one call handles a whole batch of quadrature points.  First partials come
from forward-mode differentiation: every variable carries a unit tangent and
the tangents are pushed through the tree together.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

FUNCTIONS = {
    "pow": 2,
    "abs": 1,
    "sqrt": 1,
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "min": 2,
    "max": 2,
}

_VAR_RE = re.compile(r"^(t|x|xd|xdd)(\d*)$")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    pass


class IndexOutOfRangeError(ExprError):
    pass


class ExprDomainError(ExprError, ArithmeticError):
    """Raised when a node is evaluated outside its domain.

    ``node`` is the offending subtree and ``index`` the position in the
    evaluation batch of the first bad point.
    """

    def __init__(self, message, node, index=None):
        super().__init__(f"{message} in '{node.to_string()}'")
        self.node = node
        self.index = index


# -- tree -------------------------------------------------------------------


class Node:
    def to_string(self):
        raise NotImplementedError

    def children(self):
        return ()

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()


@dataclass(frozen=True)
class Const(Node):
    value: float

    def to_string(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Node):
    kind: str  # "t", "x", "xd" or "xdd"
    index: int = 0  # 1-based, 0 for t

    def to_string(self):
        return "t" if self.kind == "t" else f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def to_string(self):
        return f"(-{self.arg.to_string()})"

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def to_string(self):
        return f"({self.left.to_string()} {self.op} {self.right.to_string()})"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: float

    def to_string(self):
        e = float(self.exponent)
        lit = repr(e) if e >= 0 else f"(-{repr(-e)})"
        return f"pow({self.base.to_string()}, {lit})"

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple

    def to_string(self):
        return f"{self.name}({', '.join(a.to_string() for a in self.args)})"

    def children(self):
        return self.args


# -- parser -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9]*)"
    r"|(?P<op>[-+*/(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, n, constants):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n
        self.constants = constants

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {value!r}, got {what}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("op", "-", self.peek()[2]):
            self.take()
            return Neg(self.atom())
        return self.atom()

    def atom(self):
        kind, value, offset = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "op" and value == "(":
            node = self.expr()
            self.take(")")
            return node
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(value, offset)
            return self.variable(value, offset)
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", offset)

    def call(self, name, offset):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r} at offset {offset}")
        self.take("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.take(")")
        if len(args) != FUNCTIONS[name]:
            raise ExprSyntaxError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", offset
            )
        if name == "pow":
            return Pow(args[0], _literal_exponent(args[1], offset))
        return Call(name, tuple(args))

    def variable(self, name, offset):
        if name in self.constants:
            return Const(float(self.constants[name]))
        m = _VAR_RE.match(name)
        if m is None or (m.group(1) == "t") != (m.group(2) == ""):
            raise UnknownIdentifierError(f"unknown identifier {name!r} at offset {offset}")
        if m.group(1) == "t":
            return Var("t", 0)
        index = int(m.group(2))
        if not 1 <= index <= self.n:
            raise IndexOutOfRangeError(
                f"index {index} of {name!r} out of range 1..{self.n} at offset {offset}"
            )
        return Var(m.group(1), index)


def _literal_exponent(node, offset):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Const):
        return -node.arg.value
    raise ExprSyntaxError("pow exponent must be a numeric literal", offset)


# -- forward-mode evaluation --------------------------------------------------


class _Dual:
    """Value array ``v`` (N,) with stacked tangents ``d`` (m, N)."""

    __slots__ = ("v", "d")

    def __init__(self, v, d):
        self.v = v
        self.d = d


def _check(node, bad, message):
    if np.any(bad):
        raise ExprDomainError(message, node, int(np.argmax(bad)))


def _eval_node(node, env, with_grad):
    if isinstance(node, Const):
        v = np.full(env["__size__"], node.value)
        return _Dual(v, env["__zero__"] if with_grad else None)
    if isinstance(node, Var):
        return env[(node.kind, node.index)]
    if isinstance(node, Neg):
        a = _eval_node(node.arg, env, with_grad)
        return _Dual(-a.v, -a.d if with_grad else None)
    if isinstance(node, BinOp):
        a = _eval_node(node.left, env, with_grad)
        b = _eval_node(node.right, env, with_grad)
        if node.op == "+":
            return _Dual(a.v + b.v, a.d + b.d if with_grad else None)
        if node.op == "-":
            return _Dual(a.v - b.v, a.d - b.d if with_grad else None)
        if node.op == "*":
            return _Dual(a.v * b.v, a.d * b.v + a.v * b.d if with_grad else None)
        _check(node, b.v == 0.0, "division by zero")
        v = a.v / b.v
        return _Dual(v, (a.d - v * b.d) / b.v if with_grad else None)
    if isinstance(node, Pow):
        return _eval_pow(node, _eval_node(node.base, env, with_grad), with_grad)
    if isinstance(node, Call):
        args = [_eval_node(a, env, with_grad) for a in node.args]
        return _eval_call(node, args, with_grad)
    raise TypeError(f"unknown node {node!r}")


def _eval_pow(node, a, with_grad):
    c = float(node.exponent)
    if c == 0.0:
        return _Dual(np.ones_like(a.v), np.zeros_like(a.d) if with_grad else None)
    integer = c.is_integer()
    if not integer:
        _check(node, a.v < 0.0, "non-integer power of a negative number")
    if c < 0:
        _check(node, a.v == 0.0, "negative power of zero")
    v = a.v**c
    if not with_grad:
        return _Dual(v, None)
    if c == 1.0:
        return _Dual(v, a.d)
    with np.errstate(divide="ignore", invalid="ignore"):
        dv = c * a.v ** (c - 1.0)
        d = np.where(a.d == 0.0, 0.0, dv * a.d)
    return _Dual(v, d)


def _eval_call(node, args, with_grad):
    name = node.name
    a = args[0]
    if name == "abs":
        return _Dual(np.abs(a.v), np.sign(a.v) * a.d if with_grad else None)
    if name == "sqrt":
        _check(node, a.v < 0.0, "sqrt of a negative number")
        v = np.sqrt(a.v)
        if not with_grad:
            return _Dual(v, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(a.d == 0.0, 0.0, a.d / (2.0 * v))
        return _Dual(v, d)
    if name == "exp":
        v = np.exp(a.v)
        return _Dual(v, v * a.d if with_grad else None)
    if name == "log":
        _check(node, a.v <= 0.0, "log of a non-positive number")
        return _Dual(np.log(a.v), a.d / a.v if with_grad else None)
    if name == "sin":
        return _Dual(np.sin(a.v), np.cos(a.v) * a.d if with_grad else None)
    if name == "cos":
        return _Dual(np.cos(a.v), -np.sin(a.v) * a.d if with_grad else None)
    b = args[1]
    # ties pick the first argument
    pick = a.v <= b.v if name == "min" else a.v >= b.v
    v = np.where(pick, a.v, b.v)
    return _Dual(v, np.where(pick, a.d, b.d) if with_grad else None)


# -- public API -------------------------------------------------------------


@dataclass(frozen=True)
class EvalPoint:
    t: float
    x: np.ndarray
    xd: np.ndarray
    xdd: np.ndarray

    def __post_init__(self):
        for name in ("x", "xd", "xdd"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        values = np.concatenate([[self.t], self.x, self.xd, self.xdd])
        if not np.all(np.isfinite(values)):
            raise ValueError("evaluation point has non-finite entries")

    def to_dict(self):
        return {
            "t": float(self.t),
            "x": [float(v) for v in self.x],
            "xd": [float(v) for v in self.xd],
            "xdd": [float(v) for v in self.xdd],
        }


@dataclass(frozen=True)
class LagrangianExpr:
    """Parsed Lagrangian L(t, x, xd, xdd) in dimension ``n``."""

    root: Node
    n: int
    source: str = field(default="", compare=False)

    @property
    def declared_autonomous(self):
        return not any(isinstance(node, Var) and node.kind == "t" for node in self.root.walk())

    def to_string(self):
        return self.root.to_string()

    def __str__(self):
        return self.to_string()

    def _env(self, t, x, xd, xdd, with_grad):
        t = np.atleast_1d(np.asarray(t, float))
        size = t.shape[0]
        x, xd, xdd = (np.asarray(a, float).reshape(size, self.n) for a in (x, xd, xdd))
        m = 1 + 3 * self.n
        env = {"__size__": size}
        if with_grad:
            env["__zero__"] = np.zeros((m, size))
        columns = [("t", 0, t)]
        for kind, arr in (("x", x), ("xd", xd), ("xdd", xdd)):
            columns += [(kind, i + 1, arr[:, i]) for i in range(self.n)]
        for slot, (kind, index, values) in enumerate(columns):
            d = None
            if with_grad:
                d = np.zeros((m, size))
                d[slot] = 1.0
            env[(kind, index)] = _Dual(values, d)
        return env

    def evaluate_batch(self, t, x, xd, xdd):
        """Values of L at ``N`` points; ``t`` is (N,), the others (N, n)."""
        with np.errstate(over="ignore"):
            return _eval_node(self.root, self._env(t, x, xd, xdd, False), False).v

    def partials_batch(self, t, x, xd, xdd):
        """Return ``(L, dL/dt, dL/dx, dL/dxd, dL/dxdd)`` at ``N`` points.

        Vector partials have shape (N, n).
        """
        with np.errstate(over="ignore"):
            out = _eval_node(self.root, self._env(t, x, xd, xdd, True), True)
        n = self.n
        d = out.d
        return (
            out.v,
            d[0].copy(),
            d[1 : 1 + n].T.copy(),
            d[1 + n : 1 + 2 * n].T.copy(),
            d[1 + 2 * n :].T.copy(),
        )


def parse(text: str, n: int, constants: Mapping[str, float] | None = None) -> LagrangianExpr:
    """Parse ``text`` into a :class:`LagrangianExpr` of dimension ``n``.

    ``constants`` maps extra identifiers (e.g. ``a``, ``b``, ``eps``) to
    numbers substituted at parse time.
    """
    if int(n) != n or n < 1:
        raise ValueError("dimension n must be a positive integer")
    root = _Parser(text, int(n), dict(constants or {})).parse()
    return LagrangianExpr(root, int(n), text)


def _check_point(L, p):
    if p.x.shape != (L.n,) or p.xd.shape != (L.n,) or p.xdd.shape != (L.n,):
        raise ValueError(f"evaluation point dimension does not match n={L.n}")


def evaluate(L: LagrangianExpr, p: EvalPoint) -> float:
    _check_point(L, p)
    return float(L.evaluate_batch([p.t], p.x[None], p.xd[None], p.xdd[None])[0])


def partials(L: LagrangianExpr, p: EvalPoint):
    """All first partials of L at ``p``: ``(dL/dt, dL/dx, dL/dxd, dL/dxdd)``."""
    _check_point(L, p)
    _, dt, dx, dxd, dxdd = L.partials_batch([p.t], p.x[None], p.xd[None], p.xdd[None])
    return float(dt[0]), dx[0], dxd[0], dxdd[0]
