"""Arithmetic expressions over phase-space variables.

Grammar (highest precedence first)::

    atom   := number | name | name "(" expr ")" | "(" expr ")"
    power  := atom ("^" unary)?          # right associative
    unary  := "-" unary | power
    term   := unary (("*" | "/") unary)*
    expr   := term (("+" | "-") term)*

Names are ``q1..qd``, ``p1..pd`` and ``t``; functions are ``sin cos tan exp
log sqrt abs``. Trees evaluate on numpy arrays and differentiate exactly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

__all__ = [
    "ParseError",
    "LexError",
    "ArityError",
    "UnknownIdentifierError",
    "EvaluationError",
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse_expr",
    "differentiate",
    "variables_for",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

_NUMPY = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

# binding strength used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class LexError(ParseError):
    pass


class ArityError(ParseError):
    pass


class UnknownIdentifierError(ParseError):
    pass


class EvaluationError(ArithmeticError):
    """Evaluation left the domain of a function (log of 0, 0/0, ...)."""


def variables_for(d: int) -> tuple[str, ...]:
    return tuple(f"q{i}" for i in range(1, d + 1)) + tuple(f"p{i}" for i in range(1, d + 1)) + ("t",)


class Expr:
    """Base class of expression nodes."""

    def evaluate(self, env: Mapping[str, np.ndarray | float]):
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                return self._eval(env)
            except FloatingPointError as exc:
                raise EvaluationError(f"cannot evaluate {self}: {exc}") from None

    def _eval(self, env):
        raise NotImplementedError

    def free_variables(self) -> set[str]:
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def _prec(self) -> int:
        return _PREC["atom"]

    def __str__(self) -> str:
        return self.pretty()

    def pretty(self) -> str:
        raise NotImplementedError


def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def _eval(self, env):
        return self.value

    def free_variables(self):
        return set()

    def diff(self, var):
        return ZERO

    def _prec(self):
        return _PREC["neg"] if self.value < 0 else _PREC["atom"]

    def pretty(self):
        return _fmt(self.value)


ZERO = Const(0.0)
ONE = Const(1.0)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def _eval(self, env):
        return env[self.name]

    def free_variables(self):
        return {self.name}

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def pretty(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def _eval(self, env):
        return -self.arg._eval(env)

    def free_variables(self):
        return self.arg.free_variables()

    def diff(self, var):
        return neg(self.arg.diff(var))

    def _prec(self):
        return _PREC["neg"]

    def pretty(self):
        inner = self.arg.pretty()
        # a unary minus binds looser than '^' but tighter than '*'
        if self.arg._prec() <= _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, env):
        a = self.left._eval(env)
        b = self.right._eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return np.divide(a, b)
        return np.power(np.asarray(a, dtype=float), b)

    def free_variables(self):
        return self.left.free_variables() | self.right.free_variables()

    def diff(self, var):
        u, v = self.left, self.right
        du, dv = u.diff(var), v.diff(var)
        if self.op == "+":
            return add(du, dv)
        if self.op == "-":
            return sub(du, dv)
        if self.op == "*":
            return add(mul(du, v), mul(u, dv))
        if self.op == "/":
            return sub(div(du, v), div(mul(u, dv), power(v, Const(2.0))))
        # power
        if var not in v.free_variables():
            return mul(mul(v, power(u, sub(v, ONE))), du)
        return mul(self, add(mul(dv, Call("log", u)), div(mul(v, du), u)))

    def _prec(self):
        return _PREC[self.op]

    def pretty(self):
        p = self._prec()
        ls, rs = self.left.pretty(), self.right.pretty()
        if self.op == "^":
            if self.left._prec() <= p:
                ls = f"({ls})"
            if self.right._prec() < _PREC["neg"]:
                rs = f"({rs})"
            return f"{ls}^{rs}"
        if self.left._prec() < p:
            ls = f"({ls})"
        # left associative: an equal-precedence right operand needs brackets
        if self.right._prec() <= p:
            rs = f"({rs})"
        return f"{ls} {self.op} {rs}"


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr

    def _eval(self, env):
        return _NUMPY[self.fn](self.arg._eval(env))

    def free_variables(self):
        return self.arg.free_variables()

    def diff(self, var):
        x = self.arg
        dx = x.diff(var)
        if dx == ZERO:
            return ZERO
        outer = {
            "sin": lambda: Call("cos", x),
            "cos": lambda: neg(Call("sin", x)),
            "tan": lambda: add(ONE, power(Call("tan", x), Const(2.0))),
            "exp": lambda: Call("exp", x),
            "log": lambda: div(ONE, x),
            "sqrt": lambda: div(Const(0.5), Call("sqrt", x)),
            # x/|x|: undefined at 0, where evaluation raises
            "abs": lambda: div(x, Call("abs", x)),
        }[self.fn]()
        return mul(outer, dx)

    def pretty(self):
        return f"{self.fn}({self.arg.pretty()})"


# -- light algebraic folding used by the differentiator ----------------------

def _const(e: Expr):
    return e.value if isinstance(e, Const) else None


def neg(a: Expr) -> Expr:
    c = _const(a)
    if c is not None:
        return Const(-c)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    cb = _const(b)
    if cb == 0:
        return ONE
    if cb == 1:
        return a
    return BinOp("^", a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative tree of ``e`` with respect to the variable ``var``."""
    return e.diff(var)


# -- lexer / parser ------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(src: str) -> list[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise LexError(f"unexpected character {src[pos]!r}", line, col)
        kind, text = m.lastgroup, m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, line, col))
        if text == "\n":
            line, col = line + 1, 1
        else:
            col += len(text)
        pos = m.end()
    toks.append(_Tok("end", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: str, names: tuple[str, ...]):
        self.toks = _lex(src)
        self.i = 0
        self.names = names

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        t = self.tok
        if t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            raise ParseError(f"expected {text!r}, found {found}", t.line, t.col)
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.line, self.tok.col)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Const(float(t.text))
        if t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            self.take()
            if t.text in FUNCTIONS:
                if self.tok.text != "(":
                    raise ArityError(f"function {t.text!r} needs one argument", t.line, t.col)
                self.take()
                if self.tok.text == ")":
                    raise ArityError(f"function {t.text!r} takes 1 argument, got 0", t.line, t.col)
                arg = self.expr()
                nargs = 1
                while self.tok.text == ",":
                    self.take()
                    self.expr()
                    nargs += 1
                if nargs != 1:
                    raise ArityError(f"function {t.text!r} takes 1 argument, got {nargs}", t.line, t.col)
                self.expect(")")
                return Call(t.text, arg)
            if t.text not in self.names:
                raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.line, t.col)
            if self.tok.text == "(":
                raise ArityError(f"{t.text!r} is not a function", t.line, t.col)
            return Var(t.text)
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {found}", t.line, t.col)


def parse_expr(source: str, d: int) -> Expr:
    """Parse ``source`` over the variables ``q1..qd, p1..pd, t``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return _Parser(source, variables_for(d)).parse()


def random_expression(rng: np.random.Generator, d: int, depth: int = 3) -> Expr:
    """A random smooth expression over ``q1..qd, p1..pd``.

    Arguments of ``log`` and ``sqrt`` and denominators are kept positive, so
    the tree is finite and differentiable on ``[-1, 1]^{2d}`` except where
    ``abs`` meets zero.
    """
    names = variables_for(d)[:-1]

    def leaf():
        if rng.random() < 0.3:
            return Const(float(np.round(rng.uniform(-2, 2), 2)))
        return Var(names[rng.integers(len(names))])

    def grow(k):
        if k == 0 or rng.random() < 0.2:
            return leaf()
        r = rng.random()
        if r < 0.45:
            op = ("+", "-", "*")[rng.integers(3)]
            return BinOp(op, grow(k - 1), grow(k - 1))
        if r < 0.55:
            den = BinOp("+", Const(2.0), BinOp("^", grow(k - 1), Const(2.0)))
            return BinOp("/", grow(k - 1), den)
        if r < 0.65:
            return BinOp("^", grow(k - 1), Const(float(rng.integers(2, 4))))
        if r < 0.7:
            return Neg(grow(k - 1))
        fn = FUNCTIONS[rng.integers(len(FUNCTIONS))]
        arg = grow(k - 1)
        if fn in ("log", "sqrt"):
            arg = BinOp("+", Const(1.5), BinOp("^", arg, Const(2.0)))
        elif fn in ("tan", "exp"):
            arg = BinOp("*", Const(0.3), arg)
        return Call(fn, arg)

    return grow(depth)
