"""Small expression language for coefficients, boundary data and test functions.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')'

Identifiers are ``x1 .. xN`` and ``t``.  Functions: ``sin cos exp log sqrt
abs min max`` and the nullary ``norm()`` (Euclidean norm of the space
variable).

Expressions are immutable, hashable trees.  They evaluate on numpy arrays and
differentiate symbolically; ``min``/``max`` have no symbolic derivative and
``abs`` is differentiable away from its kink only.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

__all__ = [
    "Expression",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Norm",
    "ParseError",
    "UnknownIdentifierError",
    "NotDifferentiableError",
    "parse_expression",
    "to_text",
    "normalize",
    "evaluate",
    "differentiate",
    "simplify",
    "variables",
    "is_time_dependent",
    "Jet",
    "jet",
]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}
_VAR_RE = re.compile(r"x([1-9][0-9]*)$")


class ParseError(ValueError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    pass


class NotDifferentiableError(ValueError):
    pass


class Expression:
    """Base class for AST nodes."""

    __slots__ = ()

    def __call__(self, env: Mapping[str, object]):
        return evaluate(self, env)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Num(Expression):
    value: float


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call(Expression):
    func: str
    args: tuple


@dataclass(frozen=True)
class Norm(Expression):
    pass


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    # offsets are reported in bytes; track char->byte mapping lazily
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", len(text[:bad].encode("utf-8")))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", off)

    def parse(self) -> Expression:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                self.take()
                if val == "norm":
                    self.expect(")")
                    return Norm()
                if val not in FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function {val!r}", off)
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ParseError(f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}", off)
                return Call(val, tuple(args))
            if val == "t" or _VAR_RE.match(val):
                return Var(val)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {val or 'end of input'!r}", off)


@lru_cache(maxsize=1024)
def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def normalize(e: Expression) -> Expression:
    """Canonical form: negative literals become ``Neg(Num(|v|))``."""
    if isinstance(e, Num):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return Neg(Num(-e.value))
        return e
    if isinstance(e, Neg):
        return Neg(normalize(e.arg))
    if isinstance(e, BinOp):
        return BinOp(e.op, normalize(e.left), normalize(e.right))
    if isinstance(e, Call):
        return Call(e.func, tuple(normalize(a) for a in e.args))
    return e


def _prec(e: Expression) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt_num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot print non-finite literal {v}")
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def _text(e: Expression) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Norm):
        return "norm()"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(_text(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = _text(e.arg)
        # the operand of unary minus binds at least as tight as '^'
        if _prec(e.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    assert isinstance(e, BinOp)
    p = _PREC[e.op]
    left, right = _text(e.left), _text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    # left-associative: equal precedence on the right needs parentheses
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def to_text(e: Expression) -> str:
    """Print the normalized form; ``parse_expression(to_text(e)) == normalize(e)``."""
    return _text(normalize(e))


# --------------------------------------------------------------------------
# Introspection and evaluation


def variables(e: Expression) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Norm):
        return frozenset({"norm"})
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= variables(a)
        return out
    return frozenset()


def is_time_dependent(e: Expression) -> bool:
    return "t" in variables(e)


def max_space_index(e: Expression) -> int:
    idx = [int(v[1:]) for v in variables(e) if v.startswith("x")]
    return max(idx, default=0)


_UFUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


def evaluate(e: Expression, env: Mapping[str, object]):
    """Evaluate on scalars or numpy arrays.

    ``env`` maps ``x1..xN`` (and ``t`` where needed) to values.  ``norm()``
    uses every ``x<i>`` key present in ``env``.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise KeyError(f"no value bound for variable {e.name!r}") from None
    if isinstance(e, Norm):
        keys = sorted((k for k in env if _VAR_RE.match(k)), key=lambda k: int(k[1:]))
        acc = 0.0
        for k in keys:
            v = env[k]
            acc = acc + v * v
        return np.sqrt(acc)
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, BinOp):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    if isinstance(e, Call):
        vals = [evaluate(a, env) for a in e.args]
        if e.func == "min":
            return np.minimum(*vals)
        if e.func == "max":
            return np.maximum(*vals)
        return _UFUNCS[e.func](vals[0])
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# Symbolic differentiation

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(e, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def simplify(e: Expression) -> Expression:
    """Constant folding and the usual 0/1 identities, bottom-up."""
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Num):
            return Num(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        args = tuple(simplify(a) for a in e.args)
        if all(isinstance(a, Num) for a in args):
            with np.errstate(all="ignore"):
                v = float(evaluate(Call(e.func, args), {}))
            if math.isfinite(v):
                return Num(v)
        return Call(e.func, args)
    if not isinstance(e, BinOp):
        return e
    a, b = simplify(e.left), simplify(e.right)
    op = e.op
    if isinstance(a, Num) and isinstance(b, Num):
        with np.errstate(all="ignore"):
            v = float(evaluate(BinOp(op, a, b), {}))
        if math.isfinite(v):
            return Num(v)
    if op == "+":
        if _is_num(a, 0):
            return b
        if _is_num(b, 0):
            return a
        if isinstance(b, Neg):
            return simplify(BinOp("-", a, b.arg))
    elif op == "-":
        if _is_num(b, 0):
            return a
        if _is_num(a, 0):
            return simplify(Neg(b))
        if isinstance(b, Neg):
            return BinOp("+", a, b.arg)
    elif op == "*":
        if _is_num(a, 0) or _is_num(b, 0):
            return ZERO
        if _is_num(a, 1):
            return b
        if _is_num(b, 1):
            return a
        if _is_num(a, -1):
            return simplify(Neg(b))
        if _is_num(b, -1):
            return simplify(Neg(a))
        if isinstance(a, Neg) and isinstance(b, Neg):
            return BinOp("*", a.arg, b.arg)
    elif op == "/":
        if _is_num(a, 0):
            return ZERO
        if _is_num(b, 1):
            return a
    elif op == "^":
        if _is_num(b, 0):
            return ONE
        if _is_num(b, 1):
            return a
    return BinOp(op, a, b)


def _d(e: Expression, var: str) -> Expression:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Norm):
        if var.startswith("x"):
            return BinOp("/", Var(var), Norm())
        return ZERO
    if isinstance(e, Neg):
        return Neg(_d(e.arg, var))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = _d(u, var), _d(v, var)
        if e.op in ("+", "-"):
            return BinOp(e.op, du, dv)
        if e.op == "*":
            return BinOp("+", BinOp("*", du, v), BinOp("*", u, dv))
        if e.op == "/":
            return BinOp("/", BinOp("-", BinOp("*", du, v), BinOp("*", u, dv)), BinOp("^", v, Num(2.0)))
        # power
        if simplify(dv) == ZERO:
            return BinOp("*", BinOp("*", v, BinOp("^", u, BinOp("-", v, ONE))), du)
        return BinOp(
            "*",
            e,
            BinOp("+", BinOp("*", dv, Call("log", (u,))), BinOp("/", BinOp("*", v, du), u)),
        )
    if isinstance(e, Call):
        if e.func in ("min", "max"):
            raise NotDifferentiableError(f"{e.func} has no symbolic derivative")
        u = e.args[0]
        du = _d(u, var)
        if e.func == "sin":
            outer = Call("cos", (u,))
        elif e.func == "cos":
            outer = Neg(Call("sin", (u,)))
        elif e.func == "exp":
            outer = e
        elif e.func == "log":
            return BinOp("/", du, u)
        elif e.func == "sqrt":
            return BinOp("/", du, BinOp("*", Num(2.0), e))
        else:  # abs: undefined (nan) at the kink
            outer = BinOp("/", u, e)
        return BinOp("*", outer, du)
    raise TypeError(f"not an expression: {e!r}")


@lru_cache(maxsize=4096)
def differentiate(e: Expression, var: str) -> Expression:
    """Symbolic partial derivative with respect to ``var`` (simplified)."""
    return simplify(_d(e, var))


# --------------------------------------------------------------------------
# Pointwise derivative bundles


@dataclass(frozen=True)
class Jet:
    """Value, gradient, Hessian and time derivative of an expression at a point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray
    dt: float
    symbolic: bool

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))

    @property
    def laplacian(self) -> float:
        return float(np.trace(self.hess))

    def inf_laplacian(self) -> float:
        """Normalized infinity Laplacian <D2 g, g>/|g|^2."""
        g = self.grad
        return float(g @ self.hess @ g / (g @ g))


def _env(x, t) -> dict:
    env = {f"x{i + 1}": float(v) for i, v in enumerate(x)}
    if t is not None:
        env["t"] = float(t)
    return env


_D1 = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


def _fd_jet(e: Expression, x: np.ndarray, t, step: float) -> Jet:
    # fourth-order central differences
    n = len(x)
    f = lambda y, s=t: float(evaluate(e, _env(y, s)))  # noqa: E731
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    h = step
    eye = np.eye(n)
    f0 = f(x)
    for i in range(n):
        ei = eye[i] * h
        grad[i] = (-f(x + 2 * ei) + 8 * f(x + ei) - 8 * f(x - ei) + f(x - 2 * ei)) / (12 * h)
        hess[i, i] = (-f(x + 2 * ei) + 16 * f(x + ei) - 30 * f0 + 16 * f(x - ei) - f(x - 2 * ei)) / (12 * h * h)
        for j in range(i + 1, n):
            ej = eye[j] * h

            d = 0.0
            for a, ca in _D1:
                for b, cb in _D1:
                    d += ca * cb * f(x + a * ei + b * ej)
            d /= h * h
            hess[i, j] = hess[j, i] = d
    dt = 0.0
    if t is not None:
        ft = lambda s: f(x, s)  # noqa: E731
        dt = (-ft(t + 2 * h) + 8 * ft(t + h) - 8 * ft(t - h) + ft(t - 2 * h)) / (12 * h)
    return Jet(f0, grad, hess, dt, False)


def jet(e: Expression, x, t=None, fd_step: float = 1e-3) -> Jet:
    """Derivatives of ``e`` at ``x`` (and ``t``).

    Symbolic where every node is differentiable and the result is finite,
    else fourth-order finite differences (``Jet.symbolic`` is False then).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    env = _env(x, t)
    names = [f"x{i + 1}" for i in range(n)]
    try:
        with np.errstate(all="ignore"):
            grad = np.array([float(evaluate(differentiate(e, v), env)) for v in names])
            hess = np.array(
                [[float(evaluate(differentiate(differentiate(e, vi), vj), env)) for vj in names] for vi in names]
            )
            dt = float(evaluate(differentiate(e, "t"), env)) if t is not None else 0.0
            value = float(evaluate(e, env))
        if np.all(np.isfinite(grad)) and np.all(np.isfinite(hess)) and math.isfinite(dt):
            return Jet(value, grad, hess, dt, True)
    except NotDifferentiableError:
        pass
    return _fd_jet(e, x, t, fd_step)
