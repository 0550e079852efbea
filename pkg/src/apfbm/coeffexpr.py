"""Coefficient expressions ``g(x, m)``.

A small recursive-descent parser for arithmetic over the variables ``x`` and
``m``.  Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    exponent := '-' exponent | power          # right-associative
    atom   := NUMBER | 'x' | 'm' | FUNC '(' expr ')' | '(' expr ')'

So ``-2^2 == -4`` and ``2^3^2 == 2^9``.  Functions: sin cos exp tanh abs sqrt.

Evaluation is numpy-vectorised and broadcasts ``x`` against ``m``; any
non-finite intermediate raises :class:`ExprEvalError` naming the
sub-expression where it first appeared.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Func",
    "CoeffExpr",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprEvalError",
    "parse",
    "evaluate",
    "theory_warnings",
    "FUNCTIONS",
    "VARIABLES",
]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
VARIABLES = ("x", "m")
_SMOOTH_BOUNDED = {"sin", "cos", "tanh"}


class ExprSyntaxError(ValueError):
    def __init__(self, text: str, offset: int, expected):
        self.text = text
        self.offset = offset
        self.expected = frozenset(expected)
        got = text[offset:offset + 10] or "end of input"
        super().__init__(
            f"syntax error at offset {offset} (near {got!r}): expected one of "
            f"{', '.join(sorted(self.expected))}"
        )


class UnknownIdentifierError(ValueError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class ExprEvalError(ArithmeticError):
    def __init__(self, node: "Node", message: str = "non-finite value"):
        self.node = node
        super().__init__(f"{message} in sub-expression {to_text(node)!r}")


# --- tree ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Func]


def to_text(node: Node) -> str:
    """Fully parenthesised rendering; re-parses to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Func):
        return f"{node.name}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Node) -> frozenset:
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    return free_variables(node.arg)


# --- parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            raise ExprSyntaxError(text, pos, {"number", "identifier", "operator", "(", ")"})
        kind = mt.lastgroup
        toks.append(_Tok(kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected):
        raise ExprSyntaxError(self.text, self.tok.offset, expected)

    def _accept(self, op: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                if not self._accept("("):
                    self._fail({"("})
                arg = self.expr()
                if not self._accept(")"):
                    self._fail({")"})
                return Func(tok.text, arg)
            raise UnknownIdentifierError(tok.text, tok.offset)
        if self._accept("("):
            node = self.expr()
            if not self._accept(")"):
                self._fail({")"})
            return node
        self._fail({"number", "x", "m", "function", "(", "-"})


# --- evaluation ---------------------------------------------------------------


def _checked(node, value):
    if not np.all(np.isfinite(value)):
        raise ExprEvalError(node)
    return value


def _eval(node: Node, x, m):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else m
    if isinstance(node, Neg):
        return -_eval(node.operand, x, m)
    if isinstance(node, Func):
        arg = _eval(node.arg, x, m)
        if node.name == "sqrt" and np.any(np.asarray(arg) < 0):
            raise ExprEvalError(node, "square root of a negative number")
        return _checked(node, FUNCTIONS[node.name](arg))
    left = _eval(node.left, x, m)
    right = _eval(node.right, x, m)
    op = node.op
    if op == "+":
        out = left + right
    elif op == "-":
        out = left - right
    elif op == "*":
        out = left * right
    elif op == "/":
        if np.any(np.asarray(right) == 0):
            raise ExprEvalError(node, "division by zero")
        out = left / right
    else:
        out = np.power(left, right)
    return _checked(node, out)


def evaluate(node: Node, x, m):
    """Evaluate a tree at ``(x, m)``; arrays broadcast, scalars give a float."""
    x = np.asarray(x, dtype=float) if not np.isscalar(x) else float(x)
    m = np.asarray(m, dtype=float) if not np.isscalar(m) else float(m)
    with np.errstate(all="ignore"):
        out = _checked(node, _eval(node, x, m))
    shape = np.broadcast_shapes(np.shape(x), np.shape(m))
    if shape == ():
        return float(out)
    return np.broadcast_to(out, shape) if np.shape(out) != shape else out


@dataclass(frozen=True)
class CoeffExpr:
    """A parsed coefficient ``g(x, m)``; call it like a function."""

    root: Node
    text: str = ""

    def __call__(self, x, m):
        return evaluate(self.root, x, m)

    def __str__(self) -> str:
        return self.text or to_text(self.root)

    @property
    def free_vars(self) -> frozenset:
        return free_variables(self.root)

    @property
    def x_independent(self) -> bool:
        """True in the simplified case ``g(x, m) = g(m)``."""
        return "x" not in self.free_vars

    @property
    def is_constant(self) -> bool:
        return not self.free_vars

    def pretty(self) -> str:
        return to_text(self.root)


def parse(text: str) -> CoeffExpr:
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return CoeffExpr(_Parser(text).parse(), text.strip())


def theory_warnings(expr: CoeffExpr) -> list[str]:
    """Flag constructs that likely break the C^3-with-bounded-derivatives assumption."""
    found = []

    def walk(node, inside_func):
        if isinstance(node, Var):
            if not inside_func:
                found.append(f"variable {node.name!r} appears outside any function argument")
        elif isinstance(node, Neg):
            walk(node.operand, inside_func)
        elif isinstance(node, BinOp):
            if node.op == "^":
                exp = node.right.value if isinstance(node.right, Num) else None
                if exp is None or exp != int(exp):
                    found.append(f"non-integer exponent in {to_text(node)!r}")
            walk(node.left, inside_func)
            walk(node.right, inside_func)
        elif isinstance(node, Func):
            if node.name not in _SMOOTH_BOUNDED:
                found.append(f"unbounded or non-smooth function {node.name!r}")
            walk(node.arg, True)

    walk(expr.root, False)
    return list(dict.fromkeys(found))
