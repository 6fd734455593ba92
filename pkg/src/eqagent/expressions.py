"""Symbolic expression trees.

The lingua franca of every regression backend in this package: immutable
trees over named variables, real constants, and a fixed operator
vocabulary.  Provides infix parsing/rendering (grammar documented in
docs/grammar.md), total IEEE-style evaluation, node-count complexity,
JSON serialization, and a sampling-based numeric equivalence test.

Evaluation never raises on pathological inputs (division by zero, log of
a negative number, ...); it propagates NaN/inf instead, so search loops
can score arbitrary candidates safely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expression",
    "OperatorSet",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "UnboundVariableError",
    "InsufficientFiniteSamplesError",
    "parse",
    "render",
    "complexity",
    "numeric_equivalent",
    "linear_combination",
    "substitute_holes",
]


class ExpressionError(Exception):
    """Base class for expression-layer failures."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed expression text; carries the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownIdentifierError(ExpressionSyntaxError):
    """An identifier that is neither a declared variable nor an operator."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier '{name}'", position)
        self.name = name


class UnboundVariableError(ExpressionError):
    """Evaluation encountered a variable missing from the environment."""


class InsufficientFiniteSamplesError(ExpressionError):
    """Too few finite sample points to decide numeric equivalence."""


def _cot(v):
    return 1.0 / np.tan(v)


UNARY_OPS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tan": np.tan,
    "cot": _cot,
    "abs": np.abs,
    "neg": np.negative,
}

BINARY_OPS: dict[str, Callable] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.true_divide,
    "^": np.power,
}


@dataclass(frozen=True)
class OperatorSet:
    """A (sub)set of the supported operator vocabulary."""

    binary: frozenset = frozenset(BINARY_OPS)
    unary: frozenset = frozenset(UNARY_OPS)

    def __post_init__(self):
        bad = set(self.binary) - set(BINARY_OPS)
        if bad:
            raise ValueError(f"unsupported binary operators: {sorted(bad)}")
        bad = set(self.unary) - set(UNARY_OPS)
        if bad:
            raise ValueError(f"unsupported unary operators: {sorted(bad)}")


#: Kinds of tree nodes. "call" nodes are unresolved template holes and
#: only appear inside template combine trees.
_KINDS = ("const", "var", "unary", "binary", "call")


@dataclass(frozen=True)
class Expression:
    """Immutable expression tree node.

    Construct through the factory classmethods (``const``, ``var``,
    ``unary``, ``binary``, ``call``) rather than the raw constructor.
    """

    kind: str
    name: str = ""
    value: float = 0.0
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"bad node kind {self.kind!r}")
        if self.kind == "const":
            if not np.isfinite(self.value):
                raise ValueError("constants must be finite reals")
            if self.children:
                raise ValueError("constant nodes take no children")
        elif self.kind == "var":
            if not self.name:
                raise ValueError("variable names must be nonempty")
            if self.children:
                raise ValueError("variable nodes take no children")
        elif self.kind == "unary":
            if self.name not in UNARY_OPS:
                raise ValueError(f"unknown unary operator {self.name!r}")
            if len(self.children) != 1:
                raise ValueError("unary nodes take exactly one child")
        elif self.kind == "binary":
            if self.name not in BINARY_OPS:
                raise ValueError(f"unknown binary operator {self.name!r}")
            if len(self.children) != 2:
                raise ValueError("binary nodes take exactly two children")
        elif self.kind == "call" and not self.name:
            raise ValueError("call nodes need a name")

    # -- factories ---------------------------------------------------
    @classmethod
    def const(cls, value: float) -> "Expression":
        return cls("const", value=float(value))

    @classmethod
    def var(cls, name: str) -> "Expression":
        return cls("var", name=name)

    @classmethod
    def unary(cls, op: str, child: "Expression") -> "Expression":
        return cls("unary", name=op, children=(child,))

    @classmethod
    def binary(cls, op: str, left: "Expression", right: "Expression") -> "Expression":
        return cls("binary", name=op, children=(left, right))

    @classmethod
    def call(cls, name: str, *args: "Expression") -> "Expression":
        return cls("call", name=name, children=tuple(args))

    # -- queries -----------------------------------------------------
    def variables(self) -> frozenset:
        if self.kind == "var":
            return frozenset((self.name,))
        out: set = set()
        for c in self.children:
            out |= c.variables()
        return frozenset(out)

    def hole_names(self) -> frozenset:
        out: set = set()
        if self.kind == "call":
            out.add(self.name)
        for c in self.children:
            out |= c.hole_names()
        return frozenset(out)

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)

    def walk(self) -> Iterable["Expression"]:
        yield self
        for c in self.children:
            yield from c.walk()

    # -- evaluation --------------------------------------------------
    def evaluate(self, env: Mapping[str, Union[float, np.ndarray]]):
        """Total evaluation over scalars or numpy arrays.

        Non-finite intermediate values propagate; nothing raises except
        an unbound variable or an unresolved hole.
        """
        with np.errstate(all="ignore"):
            return self._eval(env)

    def _eval(self, env):
        if self.kind == "const":
            return np.float64(self.value)
        if self.kind == "var":
            try:
                v = env[self.name]
            except KeyError:
                raise UnboundVariableError(
                    f"variable '{self.name}' is not bound"
                ) from None
            return np.asarray(v, dtype=np.float64) if not np.isscalar(v) else np.float64(v)
        if self.kind == "unary":
            return UNARY_OPS[self.name](self.children[0]._eval(env))
        if self.kind == "binary":
            return BINARY_OPS[self.name](
                self.children[0]._eval(env), self.children[1]._eval(env)
            )
        raise ExpressionError(f"cannot evaluate unresolved hole '{self.name}'")

    # -- serialization -----------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "const":
            return {"kind": "const", "value": self.value}
        if self.kind == "var":
            return {"kind": "var", "name": self.name}
        return {
            "kind": self.kind,
            "name": self.name,
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Expression":
        kind = d["kind"]
        if kind == "const":
            return cls.const(d["value"])
        if kind == "var":
            return cls.var(d["name"])
        children = tuple(cls.from_dict(c) for c in d["children"])
        return cls(kind, name=d["name"], children=children)

    def __str__(self) -> str:
        return render(self)


def complexity(e: Expression) -> int:
    """Node count: every variable, constant, and operator counts one."""
    return e.size


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[+\-*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip pure whitespace tail
            if text[pos:].strip() == "":
                break
            bad = len(text) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        start = m.start("number") if m.group("number") else (
            m.start("name") if m.group("name") else m.start("op")
        )
        kind = "number" if m.group("number") else ("name" if m.group("name") else "op")
        tok = m.group(kind)
        if kind == "op" and tok == "**":
            tok = "^"
        tokens.append((kind, tok, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: set, allow_holes: bool):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = set(variables)
        self.allow_holes = allow_holes

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, tok, pos = self.peek()
        if tok != value:
            raise ExpressionSyntaxError(f"expected {value!r}", pos)
        return self.advance()

    def parse(self) -> Expression:
        e = self.sum_()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {tok!r}", pos)
        return e

    def sum_(self) -> Expression:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            e = Expression.binary(op, e, self.term())
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            e = Expression.binary(op, e, self.unary())
        return e

    def unary(self) -> Expression:
        kind, tok, pos = self.peek()
        if tok == "-":
            self.advance()
            child = self.unary()
            if child.kind == "const":
                # fold a leading minus into the literal
                return Expression.const(-child.value)
            return Expression.unary("neg", child)
        if tok == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[1] == "^":
            self.advance()
            return Expression.binary("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, tok, pos = self.advance()
        if kind == "number":
            return Expression.const(float(tok))
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(tok, pos)
            if tok in self.variables:
                return Expression.var(tok)
            raise UnknownIdentifierError(tok, pos)
        if tok == "(":
            e = self.sum_()
            self.expect(")")
            return e
        raise ExpressionSyntaxError(f"unexpected token {tok!r}" if tok else "unexpected end of input", pos)

    def call(self, fname: str, fpos: int) -> Expression:
        self.expect("(")
        args = [self.sum_()]
        while self.peek()[1] == ",":
            self.advance()
            args.append(self.sum_())
        self.expect(")")
        if fname in UNARY_OPS:
            if len(args) != 1:
                raise ExpressionSyntaxError(
                    f"operator '{fname}' expects 1 argument, got {len(args)}", fpos
                )
            return Expression.unary(fname, args[0])
        if self.allow_holes:
            return Expression.call(fname, *args)
        raise UnknownIdentifierError(fname, fpos)


def parse(text: str, variables: Iterable[str], allow_holes: bool = False) -> Expression:
    """Parse an infix expression string over the declared variables.

    Raises ExpressionSyntaxError (with offset) on malformed text and
    UnknownIdentifierError for names outside ``variables`` and the
    operator vocabulary.  With ``allow_holes`` unknown function
    applications become "call" placeholder nodes (template support).
    """
    return _Parser(text, set(variables), allow_holes).parse()


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 10, 20, 25, 30, 100


def _prec(e: Expression) -> int:
    if e.kind == "binary":
        if e.name in ("+", "-"):
            return _PREC_ADD
        if e.name in ("*", "/"):
            return _PREC_MUL
        return _PREC_POW
    if e.kind == "unary" and e.name == "neg":
        return _PREC_NEG
    return _PREC_ATOM


def format_constant(v: float) -> str:
    return f"{v:.6g}"


def render(e: Expression) -> str:
    """Infix form with minimal parentheses; constants at 6 significant digits."""
    if e.kind == "const":
        return format_constant(e.value)
    if e.kind == "var":
        return e.name
    if e.kind == "call":
        return f"{e.name}({', '.join(render(c) for c in e.children)})"
    if e.kind == "unary":
        if e.name == "neg":
            child = e.children[0]
            s = render(child)
            if _prec(child) < _PREC_NEG:
                s = f"({s})"
            return f"-{s}"
        return f"{e.name}({render(e.children[0])})"
    # binary
    op = e.name
    myp = _prec(e)
    left, right = e.children
    ls, rs = render(left), render(right)
    if _prec(left) < myp or (op == "^" and _prec(left) <= myp):
        ls = f"({ls})"
    if _prec(right) < myp or (_prec(right) == myp and op in ("-", "/")):
        rs = f"({rs})"
    if op in ("+", "-"):
        return f"{ls} {op} {rs}"
    return f"{ls}{op}{rs}"


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def linear_combination(terms: Sequence[tuple]) -> Expression:
    """Build sum(coef * term) with natural +/- chaining.

    ``terms`` is a sequence of (coefficient, Expression) pairs; zero
    coefficients are dropped and an empty sum renders as 0.  A term of
    None stands for the constant feature 1.
    """
    expr: Expression | None = None
    for coef, term in terms:
        if coef == 0.0:
            continue
        mag = abs(float(coef))
        if term is None:
            piece = Expression.const(mag)
        else:
            piece = Expression.binary("*", Expression.const(mag), term)
        if expr is None:
            expr = piece if coef > 0 else Expression.unary("neg", piece)
        else:
            expr = Expression.binary("+" if coef > 0 else "-", expr, piece)
    return expr if expr is not None else Expression.const(0.0)


def substitute_holes(e: Expression, assignment: Mapping[str, Expression]) -> Expression:
    """Replace call nodes by the assigned subtrees."""
    if e.kind == "call":
        try:
            return assignment[e.name]
        except KeyError:
            raise ExpressionError(f"no assignment for hole '{e.name}'") from None
    if not e.children:
        return e
    return Expression(
        e.kind,
        name=e.name,
        value=e.value,
        children=tuple(substitute_holes(c, assignment) for c in e.children),
    )


# ---------------------------------------------------------------------------
# Numeric equivalence
# ---------------------------------------------------------------------------

def numeric_equivalent(
    a: Expression,
    b: Expression,
    domain: Mapping[str, tuple],
    n_points: int = 256,
    rel_tol: float = 1e-9,
    seed: int = 0,
):
    """Sampling-based equivalence test.

    Draws ``n_points`` joint samples from the per-variable intervals,
    evaluates both sides, and compares pointwise deviations against the
    overall magnitude scale max(|a|, |b|) of the finite samples.  Points
    where either side is non-finite are skipped; if more than half are
    skipped the comparison is meaningless and an
    InsufficientFiniteSamplesError is raised.

    Returns (equivalent, max_relative_deviation).
    """
    if n_points < 32:
        raise ValueError("n_points must be at least 32")
    names = sorted(a.variables() | b.variables())
    missing = [n for n in names if n not in domain]
    if missing:
        raise ValueError(f"domain missing intervals for {missing}")
    rng = np.random.default_rng(seed)
    env = {}
    for n in names:
        lo, hi = domain[n]
        env[n] = rng.uniform(float(lo), float(hi), size=n_points)
    va = np.broadcast_to(np.asarray(a.evaluate(env), dtype=np.float64), (n_points,))
    vb = np.broadcast_to(np.asarray(b.evaluate(env), dtype=np.float64), (n_points,))
    finite = np.isfinite(va) & np.isfinite(vb)
    n_finite = int(np.count_nonzero(finite))
    if n_finite < n_points / 2:
        raise InsufficientFiniteSamplesError(
            f"only {n_finite}/{n_points} sample points were finite"
        )
    fa, fb = va[finite], vb[finite]
    scale = max(float(np.max(np.abs(fa))), float(np.max(np.abs(fb))))
    if scale == 0.0:
        return True, 0.0
    max_dev = float(np.max(np.abs(fa - fb)) / scale)
    return max_dev <= rel_tol, max_dev
