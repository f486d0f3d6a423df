"""A small arithmetic language for nonlinearities and input signals.

Grammar (loosest binding first)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" ["-"] INTEGER)?
    atom   := NUMBER | NAME | ("sin" | "cos") "(" expr ")" | "(" expr ")"

Expressions evaluate elementwise, so a symbol may be bound to a scalar or to
a numpy array of samples.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Collection, Mapping

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos}


class ExpressionError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Num | Sym | Neg | BinOp | Pow | Call

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, symbols: Collection[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r} but found {found}", pos)

    def parse(self) -> Expr:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r}", pos)
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
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            sign = 1
            if self.peek()[:2] == ("op", "-"):
                self.take()
                sign = -1
            kind, val, pos = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                raise ExpressionError("exponent must be an integer literal", pos)
            return Pow(base, sign * int(val))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if self.symbols is not None and val not in self.symbols:
                valid = ", ".join(sorted(self.symbols)) or "(none)"
                raise ExpressionError(f"unknown symbol {val!r}; valid symbols: {valid}", pos)
            return Sym(val)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {found}", pos)


def parse_expression(text: str, symbols: Collection[str] | None = None) -> Expr:
    """Parse ``text``; when ``symbols`` is given, other names are rejected."""
    return _Parser(text, symbols).parse()


def to_text(node: Expr) -> str:
    """Fully parenthesised rendering that re-parses to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def symbols_of(node: Expr) -> set[str]:
    if isinstance(node, Sym):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return symbols_of(node.arg)
    if isinstance(node, Pow):
        return symbols_of(node.base)
    return symbols_of(node.left) | symbols_of(node.right)


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise ExpressionError("division by zero")
    return a / b


def _power(a, n):
    if n < 0:
        return _divide(1.0, a**-n)
    return a**n


def compile_expression(node: Expr) -> Callable[[Mapping[str, object]], object]:
    """Turn a tree into a closure ``env -> value``."""
    if isinstance(node, Num):
        v = node.value
        return lambda env: v
    if isinstance(node, Sym):
        name = node.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise ExpressionError(f"symbol {name!r} is not bound") from None

        return lookup
    if isinstance(node, Neg):
        f = compile_expression(node.arg)
        return lambda env: -f(env)
    if isinstance(node, Pow):
        f, n = compile_expression(node.base), node.exponent
        return lambda env: _power(f(env), n)
    if isinstance(node, Call):
        f, fn = compile_expression(node.arg), FUNCTIONS[node.func]
        return lambda env: fn(f(env))
    lf, rf = compile_expression(node.left), compile_expression(node.right)
    if node.op == "+":
        return lambda env: lf(env) + rf(env)
    if node.op == "-":
        return lambda env: lf(env) - rf(env)
    if node.op == "*":
        return lambda env: lf(env) * rf(env)
    return lambda env: _divide(lf(env), rf(env))


class Expression:
    """Parsed text bundled with its compiled evaluator."""

    __slots__ = ("text", "tree", "_fn")

    def __init__(self, text: str, symbols: Collection[str] | None = None):
        self.text = str(text)
        self.tree = parse_expression(self.text, symbols)
        self._fn = compile_expression(self.tree)

    def __call__(self, env: Mapping[str, object]):
        return self._fn(env)

    @property
    def symbols(self) -> set[str]:
        return symbols_of(self.tree)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.tree, Num) and self.tree.value == 0.0

    def __repr__(self):
        return f"Expression({self.text!r})"


def evaluate(text: str, env: Mapping[str, object]):
    return Expression(text)(env)
