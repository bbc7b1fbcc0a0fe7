"""Coefficient expressions in the variable ``x``.

A small Pratt-style parser produces an immutable expression tree.
Evaluation is complex-valued throughout; real inputs are promoted.

    >>> e = parse("-3*cn(x,0.5)^2")
    >>> e.evaluate(0.0)
    (-3+0j)

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import elliptic
from .errors import DomainError, ExprSyntaxError, UnknownIdentifierError, UserError

# name -> arity
FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "sinh": 1, "cosh": 1, "sqrt": 1, "log": 1,
    "sn": 2, "cn": 2, "dn": 2, "K": 1,
}
CONSTANTS = {"pi": math.pi, "e": math.e, "i": 1j}


class Node:
    """Base class of expression tree nodes."""

    __slots__ = ()

    def evaluate(self, x, params: Mapping[str, complex] | None = None):
        return _eval(self, x, params or {})

    def depends_on_x(self) -> bool:
        return any(isinstance(n, Var) for n in self.walk())

    def walk(self):
        yield self

    def __str__(self) -> str:
        return _print(self)


@dataclass(frozen=True)
class Const(Node):
    value: complex


@dataclass(frozen=True)
class Var(Node):
    pass


@dataclass(frozen=True)
class Param(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def walk(self):
        yield self
        yield from self.arg.walk()


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def walk(self):
        yield self
        yield from self.left.walk()
        yield from self.right.walk()


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple = field(default_factory=tuple)

    def walk(self):
        yield self
        for a in self.args:
            yield from a.walk()


# --------------------------------------------------------------------------
# tokenizer / parser

_PUNCT = set("+-*/^(),")


def _tokenize(src: str):
    data = src.encode("utf-8")
    toks = []
    pos = 0
    n = len(data)
    while pos < n:
        ch = chr(data[pos])
        if ch.isspace():
            pos += 1
            continue
        if ch in _PUNCT:
            toks.append((ch, ch, pos))
            pos += 1
            continue
        if ch.isdigit() or ch == ".":
            start = pos
            while pos < n and (chr(data[pos]).isdigit() or chr(data[pos]) == "."):
                pos += 1
            if pos < n and chr(data[pos]) in "eE":
                look = pos + 1
                if look < n and chr(data[look]) in "+-":
                    look += 1
                if look < n and chr(data[look]).isdigit():
                    pos = look
                    while pos < n and chr(data[pos]).isdigit():
                        pos += 1
            text = data[start:pos].decode()
            try:
                value: complex = float(text)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {text!r}", start, src) from None
            if pos < n and chr(data[pos]) in "ij" and not (
                    pos + 1 < n and (chr(data[pos + 1]).isalnum() or chr(data[pos + 1]) == "_")):
                value = complex(0.0, value)
                pos += 1
            toks.append(("num", value, start))
            continue
        if ch.isalpha() or ch == "_":
            start = pos
            while pos < n and (chr(data[pos]).isalnum() or chr(data[pos]) == "_"):
                pos += 1
            toks.append(("id", data[start:pos].decode(), start))
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", pos, src)
    toks.append(("end", None, n))
    return toks


class _Parser:
    def __init__(self, src: str, params):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.params = set(params)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.take()
        if tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {kind!r}, found {what}", tok[2], self.src)
        return tok

    def parse(self) -> Node:
        node = self.additive()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2], self.src)
        return node

    def additive(self):
        node = self.multiplicative()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind = self.peek()[0]
        if kind == "-":
            self.take()
            return Neg(self.unary())
        if kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "^":
            self.take()
            # right associative; exponent may carry its own sign
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Const(complex(value))
        if kind == "(":
            node = self.additive()
            self.expect(")")
            return node
        if kind == "id":
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, pos)
                self.take()
                args = [self.additive()]
                while self.peek()[0] == ",":
                    self.take()
                    args.append(self.additive())
                self.expect(")")
                if len(args) != FUNCTIONS[value]:
                    raise ExprSyntaxError(
                        f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}", pos, self.src)
                return Call(value, tuple(args))
            if value == "x":
                return Var()
            if value in self.params:
                return Param(value)
            if value in CONSTANTS:
                return Const(complex(CONSTANTS[value]))
            raise UnknownIdentifierError(value, pos)
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", pos, self.src)


def parse(source: str, params=()) -> Node:
    """Parse ``source`` into an expression tree.

    ``params`` names the identifiers (besides ``x`` and the builtin constants
    ``pi``, ``e``, ``i``) that may appear; their values are supplied at
    evaluation time.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source or "")
    return _Parser(source, params).parse()


# --------------------------------------------------------------------------
# evaluation

def _real_arg(v, name):
    if isinstance(v, np.ndarray):
        if np.any(v.imag != 0):
            raise DomainError(f"{name} requires a real argument")
        return v.real
    v = complex(v)
    if v.imag != 0:
        raise DomainError(f"{name} requires a real argument")
    return v.real


def _call(name, args):
    arr = any(isinstance(a, np.ndarray) for a in args)
    if name in ("sn", "cn", "dn"):
        u = _real_arg(args[0], name)
        m = args[1]
        if isinstance(m, np.ndarray):
            raise DomainError(f"{name}: parameter m must not depend on x")
        s, c, d = elliptic.jacobi(u, _real_arg(m, name))
        out = {"sn": s, "cn": c, "dn": d}[name]
        return np.asarray(out, dtype=complex) if arr else complex(out)
    if name == "K":
        if arr:
            raise DomainError("K: parameter must not depend on x")
        return complex(elliptic.ellipk(_real_arg(args[0], "K")))
    a = args[0]
    if arr:
        return getattr(np, {"sqrt": "sqrt", "log": "log"}.get(name, name))(a.astype(complex))
    return getattr(cmath, name)(a)


def _eval(node, x, params):
    t = type(node)
    if t is Const:
        return node.value
    if t is Var:
        return x
    if t is Param:
        return complex(params[node.name])
    if t is Neg:
        return -_eval(node.arg, x, params)
    if t is BinOp:
        a = _eval(node.left, x, params)
        b = _eval(node.right, x, params)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return _power(a, b)
    return _call(node.name, [_eval(a, x, params) for a in node.args])


def _power(a, b):
    if not isinstance(b, np.ndarray):
        b = complex(b)
        if b.imag == 0 and b.real == int(b.real) and abs(b.real) <= 64:
            k = int(b.real)
            if isinstance(a, np.ndarray):
                return a.astype(complex) ** k
            return complex(a) ** k
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.power(np.asarray(a, dtype=complex), b)
    return complex(a) ** b


def evaluate(node: Node, x, params: Mapping[str, complex] | None = None):
    """Evaluate at real or complex ``x`` (scalar or numpy array)."""
    if isinstance(x, np.ndarray):
        x = x.astype(complex)
        out = _eval(node, x, params or {})
        return np.broadcast_to(np.asarray(out, dtype=complex), x.shape).copy()
    return complex(_eval(node, complex(x), params or {}))


# --------------------------------------------------------------------------
# printing: fully parenthesised, round-trips through parse()

def _fmt_const(v: complex) -> str:
    if v.imag == 0:
        r = repr(float(v.real))
        return r if v.real >= 0 else f"({r})"
    if v.real == 0:
        return f"({float(v.imag)!r}i)"
    return f"({float(v.real)!r}+{float(v.imag)!r}i)"


def _print(node) -> str:
    t = type(node)
    if t is Const:
        return _fmt_const(node.value)
    if t is Var:
        return "x"
    if t is Param:
        return node.name
    if t is Neg:
        return f"(-{_print(node.arg)})"
    if t is BinOp:
        return f"({_print(node.left)}{node.op}{_print(node.right)})"
    return f"{node.name}(" + ",".join(_print(a) for a in node.args) + ")"


# --------------------------------------------------------------------------
# differentiation in x, used internally to expand divergence-form terms

ZERO = Const(0j)
ONE = Const(1 + 0j)


def _is(node, value) -> bool:
    return type(node) is Const and node.value == value


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if type(a) is Const and type(b) is Const:
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if type(a) is Const and type(b) is Const:
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a):
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Neg:
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if type(a) is Const and type(b) is Const:
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def derivative(node: Node) -> Node:
    """d/dx of ``node`` as a new tree (forward-mode rules on the builtins)."""
    if not node.depends_on_x():
        return ZERO
    t = type(node)
    if t is Var:
        return ONE
    if t is Neg:
        return _neg(derivative(node.arg))
    if t is BinOp:
        a, b = node.left, node.right
        da, db = derivative(a), derivative(b)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), BinOp("^", b, Const(2 + 0j)))
        if not b.depends_on_x():
            expo = _sub(b, ONE)
            return _mul(_mul(b, BinOp("^", a, expo)), da)
        # a^b = exp(b log a)
        inner = _add(_mul(db, Call("log", (a,))), _mul(b, _div(da, a)))
        return _mul(node, inner)
    name, args = node.name, node.args
    u = args[0]
    du = derivative(u)
    if name == "sin":
        outer = Call("cos", (u,))
    elif name == "cos":
        outer = _neg(Call("sin", (u,)))
    elif name == "exp":
        outer = node
    elif name == "sinh":
        outer = Call("cosh", (u,))
    elif name == "cosh":
        outer = Call("sinh", (u,))
    elif name == "sqrt":
        outer = _div(ONE, _mul(Const(2 + 0j), node))
    elif name == "log":
        outer = _div(ONE, u)
    elif name in ("sn", "cn", "dn"):
        m = args[1]
        if m.depends_on_x():
            raise UserError(f"{name}: parameter m must not depend on x")
        s, c, d = (Call(f, (u, m)) for f in ("sn", "cn", "dn"))
        if name == "sn":
            outer = _mul(c, d)
        elif name == "cn":
            outer = _neg(_mul(s, d))
        else:
            outer = _neg(_mul(m, _mul(s, c)))
    else:
        raise UserError(f"{name}: argument must not depend on x")
    return _mul(outer, du)


def substitute(node: Node, params: Mapping[str, complex]) -> Node:
    """Replace parameters by constants and fold x-free subtrees."""
    t = type(node)
    if t is Param:
        return Const(complex(params[node.name]))
    if t in (Const, Var):
        return node
    if not node.depends_on_x():
        return Const(evaluate(node, 0.0, params))
    if t is Neg:
        return _neg(substitute(node.arg, params))
    if t is BinOp:
        return BinOp(node.op, substitute(node.left, params), substitute(node.right, params))
    return Call(node.name, tuple(substitute(a, params) for a in node.args))


def constant_value(node: Node, params: Mapping[str, complex] | None = None) -> complex | None:
    """The value of an x-free expression, else None."""
    if node.depends_on_x():
        return None
    return evaluate(node, 0.0, params)


def is_real(node: Node, params: Mapping[str, complex] | None = None) -> bool:
    """True when every constant and parameter in the tree is real.

    Builtins map reals to reals on their domains, so this decides whether
    the expression is real-valued for real ``x``.
    """
    params = params or {}
    for n in node.walk():
        if type(n) is Const and n.value.imag != 0:
            return False
        if type(n) is Param and complex(params[n.name]).imag != 0:
            return False
    return True


# --------------------------------------------------------------------------
# stack-machine programs for the compiled integrator

OP_CONST, OP_X, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_NEG = range(8)
OP_SIN, OP_COS, OP_EXP, OP_SINH, OP_COSH, OP_SQRT, OP_LOG = range(8, 15)
OP_SN, OP_CN, OP_DN, OP_K, OP_IPOW = range(15, 20)

_BINOPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_CALLS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "sinh": OP_SINH, "cosh": OP_COSH,
          "sqrt": OP_SQRT, "log": OP_LOG, "sn": OP_SN, "cn": OP_CN, "dn": OP_DN, "K": OP_K}


@dataclass(frozen=True)
class Program:
    """Postfix encoding of a parameter-free expression."""

    ops: tuple
    args: tuple
    consts: tuple
    depth: int


def compile_program(node: Node) -> Program:
    """Flatten a tree (parameters already substituted) into postfix form."""
    ops, args, consts = [], [], []
    depth = [0, 0]

    def push(op, arg=0, delta=0):
        ops.append(op)
        args.append(arg)
        depth[0] += delta
        depth[1] = max(depth[1], depth[0])

    def emit(n):
        t = type(n)
        if t is Const:
            consts.append(n.value)
            push(OP_CONST, len(consts) - 1, 1)
        elif t is Var:
            push(OP_X, 0, 1)
        elif t is Param:
            raise UserError(f"parameter {n.name!r} not substituted")
        elif t is Neg:
            emit(n.arg)
            push(OP_NEG)
        elif t is BinOp:
            rv = constant_value(n.right) if n.op == "^" else None
            if rv is not None and rv.imag == 0 and rv.real == int(rv.real) and abs(rv.real) <= 64:
                emit(n.left)
                push(OP_IPOW, int(rv.real))
                return
            emit(n.left)
            emit(n.right)
            push(_BINOPS[n.op], 0, -1)
        else:
            for a in n.args:
                emit(a)
            push(_CALLS[n.name], 0, 1 - len(n.args))

    emit(node)
    return Program(tuple(ops), tuple(args), tuple(consts), depth[1])


def to_callable(node: Node):
    """Closure evaluating a parameter-free tree at a scalar ``x`` (fast path)."""
    t = type(node)
    if t is Const:
        v = node.value
        return lambda x: v
    if t is Var:
        return lambda x: x
    if t is Neg:
        f = to_callable(node.arg)
        return lambda x: -f(x)
    if t is BinOp:
        f, g = to_callable(node.left), to_callable(node.right)
        op = node.op
        if op == "+":
            return lambda x: f(x) + g(x)
        if op == "-":
            return lambda x: f(x) - g(x)
        if op == "*":
            return lambda x: f(x) * g(x)
        if op == "/":
            return lambda x: f(x) / g(x)
        rv = constant_value(node.right)
        if rv is not None and rv.imag == 0 and rv.real == int(rv.real) and abs(rv.real) <= 64:
            k = int(rv.real)
            return lambda x: f(x) ** k
        return lambda x: complex(f(x)) ** g(x)
    name = node.name
    fs = [to_callable(a) for a in node.args]
    if name in ("sn", "cn", "dn"):
        which = ("sn", "cn", "dn").index(name)
        fu, fm = fs

        def jac(x):
            u, m = complex(fu(x)), complex(fm(x))
            if u.imag != 0 or m.imag != 0:
                raise DomainError(f"{name} requires real arguments")
            return complex(elliptic.jacobi(u.real, m.real)[which])
        return jac
    if name == "K":
        fm = fs[0]
        return lambda x: complex(elliptic.ellipk(_real_arg(fm(x), "K")))
    fn = getattr(cmath, name)
    f = fs[0]
    return lambda x: fn(f(x))
