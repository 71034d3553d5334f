"""A small arithmetic language for scalar coefficient components.

Grammar (unary minus binds tightest, then ``* /``, then ``+ -``, all binary
operators left-associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Variables depend on the slot: ``f`` and ``g`` see ``t``, ``s``, ``y1..yk``
and ``z11..zkd``; ``xi`` sees the terminal Brownian value ``wT`` (``wT1..wTd``
when d > 1). Evaluation is vectorised over numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

SLOTS = ("f", "g", "xi")

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


class ExpressionError(ValueError):
    """Syntax or scoping error; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class EvaluationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def allowed_variables(slot: str, dims) -> set:
    k, d, _l = dims
    if slot in ("f", "g"):
        names = {"t", "s"} | {f"y{r + 1}" for r in range(k)}
        names |= {f"z{r + 1}{c + 1}" for r in range(k) for c in range(d)}
        return names
    if slot == "xi":
        return {"wT"} if d == 1 else {f"wT{c + 1}" for c in range(d)}
    raise ValueError(f"unknown slot {slot!r}; expected one of {SLOTS}")


class _Parser:
    def __init__(self, text: str, allowed: set):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExpressionError(f"expected {value!r}, found {found}", tok[2], self.text)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected token {tok[1]!r}", tok[2], self.text)
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
        return self.primary()

    def primary(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(value, pos)
            if value in FUNCTIONS:
                raise ExpressionError(f"function {value!r} used without arguments", pos, self.text)
            if value not in self.allowed:
                if _is_variable_name(value):
                    raise ExpressionError(f"variable {value!r} is not allowed in this slot", pos, self.text)
                raise ExpressionError(f"unknown identifier {value!r}", pos, self.text)
            return Var(value)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(value)
        raise ExpressionError(f"unexpected {found}", pos, self.text)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r}", pos, self.text)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name][0]
        if len(args) != arity:
            raise ExpressionError(f"{name} takes {arity} argument(s), got {len(args)}", pos, self.text)
        return Call(name, tuple(args))


_VARIABLE = re.compile(r"^(t|s|y\d+|z\d\d+|wT\d*)$")


def _is_variable_name(name: str) -> bool:
    return bool(_VARIABLE.match(name))


def parse_expression(text: str, slot: str = "f", dims=(1, 1, 1)):
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0, text)
    return _Parser(text, allowed_variables(slot, dims)).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(node) -> str:
    """Render an AST as text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        return f"-({inner})" if isinstance(node.operand, BinOp) else f"-{inner}"
    prec = _PREC[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    if isinstance(node.left, BinOp) and _PREC[node.left.op] < prec:
        left = f"({left})"
    # left-associative: an equal-precedence right operand needs parentheses
    if isinstance(node.right, BinOp) and _PREC[node.right.op] <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def variables(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set().union(*(variables(a) for a in node.args))


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        fn = FUNCTIONS[node.name][1]
        return fn(*(_eval(a, env) for a in node.args))
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if np.any(np.asarray(right) == 0):
        raise EvaluationError(f"division by zero in {to_source(node)!r}")
    return left / right


def evaluate(node, env: dict):
    """Evaluate with variables bound in ``env`` (scalars or broadcastable arrays)."""
    missing = variables(node) - set(env)
    if missing:
        raise KeyError(f"unbound variables: {sorted(missing)}")
    with np.errstate(all="ignore"):
        value = _eval(node, env)
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"non-finite value from {to_source(node)!r}")
    return value


def evaluate_coefficient(node, t=0.0, s=0.0, y=(), z=()):
    """Evaluate an f/g component at one point; ``y`` is a k-vector, ``z`` a k x d matrix."""
    env = {"t": t, "s": s}
    for r, v in enumerate(np.atleast_1d(np.asarray(y, dtype=float))):
        env[f"y{r + 1}"] = v
    z = np.atleast_2d(np.asarray(z, dtype=float)) if np.size(z) else np.zeros((0, 0))
    for r in range(z.shape[0]):
        for c in range(z.shape[1]):
            env[f"z{r + 1}{c + 1}"] = z[r, c]
    return float(evaluate(node, env))
