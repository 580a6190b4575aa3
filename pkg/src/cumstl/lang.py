"""STL formula language: AST, parser, printer, horizon and structural checks.

Concrete syntax (whitespace-insensitive)::

    formula := disj
    disj    := conj { "||" conj }
    conj    := unary { "&&" unary }
    unary   := "!" unary | "F" ival unary | "G" ival unary | atom [ "U" ival unary ]
    atom    := "true" | "(" formula ")" | pred
    ival    := "[" int "," int "]"
    pred    := expr cmp expr          cmp := ">" | ">=" | "<" | "<="
    expr    := polynomial over x1..xn with + - * and integer ^

Intervals are integer step offsets. Every predicate is normalized to the form
``l(x) >= 0``; strict and non-strict comparisons are not distinguished.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np


class ParseError(ValueError):
    """Raised for malformed formula text; ``pos`` is the character offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")


class IntervalError(ParseError):
    pass


class UnknownVariableError(ParseError):
    pass


# ---------------------------------------------------------------------------
# Predicate expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    def evaluate(self, x):
        return np.full(np.shape(x)[1:], self.value, dtype=float)

    def partial(self, x, i):
        return np.zeros(np.shape(x)[1:])

    def variables(self):
        return frozenset()


@dataclass(frozen=True)
class Var:
    index: int  # zero-based state component

    def evaluate(self, x):
        return np.asarray(x[self.index], dtype=float)

    def partial(self, x, i):
        return np.full(np.shape(x)[1:], 1.0 if i == self.index else 0.0)

    def variables(self):
        return frozenset((self.index,))


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def evaluate(self, x):
        return -self.arg.evaluate(x)

    def partial(self, x, i):
        return -self.arg.partial(x, i)

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class BinOp:
    op: str  # one of "+", "-", "*"
    left: "Expr"
    right: "Expr"

    def evaluate(self, x):
        a = self.left.evaluate(x)
        b = self.right.evaluate(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        return a * b

    def partial(self, x, i):
        if self.op == "*":
            return (self.left.partial(x, i) * self.right.evaluate(x)
                    + self.left.evaluate(x) * self.right.partial(x, i))
        da = self.left.partial(x, i)
        db = self.right.partial(x, i)
        return da + db if self.op == "+" else da - db

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int

    def evaluate(self, x):
        return self.base.evaluate(x) ** self.exponent

    def partial(self, x, i):
        if self.exponent == 0:
            return np.zeros(np.shape(x)[1:])
        return (self.exponent * self.base.evaluate(x) ** (self.exponent - 1)
                * self.base.partial(x, i))

    def variables(self):
        return self.base.variables()


Expr = Union[Const, Var, Neg, BinOp, Pow]


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise IntervalError(
                f"interval [{self.lo},{self.hi}] must satisfy 0 <= lo < hi", 0)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Pred:
    """Atomic predicate ``expr >= 0``."""

    expr: Expr

    def value(self, x):
        """Evaluate ``l`` on a state array of shape (n, ...)."""
        return self.expr.evaluate(x)

    def gradient(self, x):
        """Partials of ``l`` stacked as an array shaped like ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i in self.expr.variables():
            out[i] = self.expr.partial(x, i)
        return out


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Finally:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Globally:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: "Formula"
    right: "Formula"


Formula = Union[TrueF, Pred, Not, And, Or, Finally, Globally, Until]


def children(f: Formula) -> tuple:
    if isinstance(f, (TrueF, Pred)):
        return ()
    if isinstance(f, (Not, Finally, Globally)):
        return (f.arg,)
    return (f.left, f.right)


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    for c in children(f):
        yield from subformulas(c)


def size(f: Formula) -> int:
    return sum(1 for _ in subformulas(f))


def conjunction(parts) -> Formula:
    """Left-nested conjunction of a non-empty sequence of formulas."""
    parts = list(parts)
    if not parts:
        raise ValueError("empty conjunction")
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disjunction(parts) -> Formula:
    parts = list(parts)
    if not parts:
        raise ValueError("empty disjunction")
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def horizon(f: Formula) -> int:
    """Number of future steps needed to evaluate ``f`` at a single time."""
    if isinstance(f, (TrueF, Pred)):
        return 0
    if isinstance(f, Not):
        return horizon(f.arg)
    if isinstance(f, (And, Or)):
        return max(horizon(f.left), horizon(f.right))
    if isinstance(f, (Finally, Globally)):
        return f.interval.hi + horizon(f.arg)
    if isinstance(f, Until):
        return f.interval.hi + max(horizon(f.left), horizon(f.right))
    raise TypeError(f"not a formula: {f!r}")


def state_variables(f: Formula) -> frozenset:
    out = frozenset()
    for g in subformulas(f):
        if isinstance(g, Pred):
            out |= g.expr.variables()
    return out


def validate_no_neg_finally(f: Formula, strict: bool = False):
    """Return ``None`` if no Finally sits under an odd number of negations.

    Otherwise return the path (tuple of child positions from the root) of the
    first offending node. With ``strict=True`` a negated Until is reported as
    well; the cumulative positivity equivalence needs both excluded.
    """

    def walk(g, odd, path):
        if odd and (isinstance(g, Finally) or (strict and isinstance(g, Until))):
            return path
        flip = isinstance(g, Not)
        for i, c in enumerate(children(g)):
            hit = walk(c, odd ^ flip, path + (i,))
            if hit is not None:
                return hit
        return None

    return walk(f, False, ())


def subformula_at(f: Formula, path) -> Formula:
    for i in path:
        f = children(f)[i]
    return f


def to_nnf(f: Formula) -> Formula:
    """Negation normal form: negations only directly above atoms or Until.

    ``Not(Pred)`` is kept as is (rather than flipping the predicate) so the
    boolean meaning is preserved exactly, including at ``l = 0``.
    """
    if isinstance(f, (TrueF, Pred)):
        return f
    if isinstance(f, And):
        return And(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Or):
        return Or(to_nnf(f.left), to_nnf(f.right))
    if isinstance(f, Finally):
        return Finally(f.interval, to_nnf(f.arg))
    if isinstance(f, Globally):
        return Globally(f.interval, to_nnf(f.arg))
    if isinstance(f, Until):
        return Until(f.interval, to_nnf(f.left), to_nnf(f.right))
    g = f.arg
    if isinstance(g, Not):
        return to_nnf(g.arg)
    if isinstance(g, And):
        return Or(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
    if isinstance(g, Or):
        return And(to_nnf(Not(g.left)), to_nnf(Not(g.right)))
    if isinstance(g, Finally):
        return Globally(g.interval, to_nnf(Not(g.arg)))
    if isinstance(g, Globally):
        return Finally(g.interval, to_nnf(Not(g.arg)))
    if isinstance(g, Until):
        return Not(Until(g.interval, to_nnf(g.left), to_nnf(g.right)))
    return f


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_EXPR_PREC = {"+": 1, "-": 1, "*": 2}


def _expr_prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _EXPR_PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Neg):
        inner = format_expr(e.arg)
        return f"-{inner}" if _expr_prec(e.arg) >= 3 else f"-({inner})"
    if isinstance(e, Pow):
        inner = format_expr(e.base)
        if _expr_prec(e.base) < 5:
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    p = _EXPR_PREC[e.op]
    left = format_expr(e.left)
    if _expr_prec(e.left) < p:
        left = f"({left})"
    right = format_expr(e.right)
    if _expr_prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def _fprec(f: Formula) -> int:
    if isinstance(f, Or):
        return 1
    if isinstance(f, And):
        return 2
    if isinstance(f, (Not, Finally, Globally, Until)):
        return 3
    return 4


def _as_atom(f: Formula) -> str:
    s = format_formula(f)
    return s if isinstance(f, (TrueF, Pred)) else f"({s})"


def _as_unary(f: Formula) -> str:
    s = format_formula(f)
    return s if _fprec(f) >= 3 else f"({s})"


def format_formula(f: Formula) -> str:
    """Render ``f`` in the concrete syntax; ``parse`` inverts it exactly."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Pred):
        return f"{format_expr(f.expr)} > 0"
    if isinstance(f, Not):
        return f"!{_as_unary(f.arg)}"
    if isinstance(f, (Finally, Globally)):
        op = "F" if isinstance(f, Finally) else "G"
        return f"{op}[{f.interval.lo},{f.interval.hi}] {_as_unary(f.arg)}"
    if isinstance(f, Until):
        iv = f.interval
        return f"{_as_atom(f.left)} U[{iv.lo},{iv.hi}] {_as_unary(f.right)}"
    op = "&&" if isinstance(f, And) else "||"
    p = _fprec(f)
    left = format_formula(f.left)
    if _fprec(f.left) < p:
        left = f"({left})"
    right = format_formula(f.right)
    if _fprec(f.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>x\d+)
  | (?P<kw>true\b|[FGU](?![A-Za-z0-9_]))
  | (?P<op>&&|\|\||>=|<=|[!<>()\[\],+\-*^])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, state_dim: int):
        self.text = text
        self.state_dim = state_dim
        self.toks = _tokenize(text)
        self.i = 0
        self.furthest: ParseError | None = None

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, message: str, cls=ParseError):
        err = cls(message, self.tok.pos, self.text)
        if self.furthest is None or err.pos >= self.furthest.pos:
            self.furthest = err
        raise err

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            self._fail(f"expected {text!r}, found {found!r}")

    # formulas
    def formula(self) -> Formula:
        f = self.conj()
        while self.accept("||"):
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.accept("&&"):
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("F"):
            iv = self.interval()
            return Finally(iv, self.unary())
        if self.accept("G"):
            iv = self.interval()
            return Globally(iv, self.unary())
        left = self.atom()
        if self.accept("U"):
            iv = self.interval()
            return Until(iv, left, self.unary())
        return left

    def interval(self) -> Interval:
        self.expect("[")
        start = self.tok.pos
        lo = self.integer()
        self.expect(",")
        hi = self.integer()
        self.expect("]")
        if not (0 <= lo < hi):
            raise IntervalError(
                f"interval [{lo},{hi}] must satisfy 0 <= lo < hi", start, self.text)
        return Interval(lo, hi)

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            self._fail("expected integer")
        self.i += 1
        return -int(t.text) if neg else int(t.text)

    def atom(self) -> Formula:
        if self.accept("true"):
            return TrueF()
        if self.tok.text == "(":
            # "(" opens either a parenthesized formula or an expression.
            mark = self.i
            try:
                return self.pred()
            except UnknownVariableError:
                raise
            except ParseError:
                self.i = mark
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        return self.pred()

    def pred(self) -> Formula:
        lhs = self.expr()
        t = self.tok
        if t.text not in (">", ">=", "<", "<="):
            self._fail("expected comparison operator")
        self.i += 1
        rhs = self.expr()
        if t.text in (">", ">="):
            if rhs == Const(0.0):
                return Pred(lhs)
            return Pred(BinOp("-", lhs, rhs))
        return Pred(BinOp("-", rhs, lhs))

    # expressions
    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.accept("*"):
            e = BinOp("*", e, self.factor())
        return e

    def factor(self) -> Expr:
        if self.accept("-"):
            return Neg(self.factor())
        base = self.primary()
        if self.accept("^"):
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                self._fail("exponent must be a non-negative integer")
            self.i += 1
            return Pow(base, int(t.text))
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(float(t.text))
        if t.kind == "var":
            idx = int(t.text[1:]) - 1
            if not (0 <= idx < self.state_dim):
                self._fail(
                    f"unknown variable {t.text} (state dimension {self.state_dim})",
                    UnknownVariableError)
            self.i += 1
            return Var(idx)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        found = t.text or "end of input"
        self._fail(f"expected expression, found {found!r}")


def parse(text: str, state_dim: int) -> Formula:
    """Parse formula text over state variables ``x1..x{state_dim}``."""
    if state_dim < 1:
        raise ValueError("state_dim must be >= 1")
    p = _Parser(text, state_dim)
    try:
        f = p.formula()
        if p.tok.kind != "eof":
            p._fail(f"unexpected {p.tok.text!r}")
    except (IntervalError, UnknownVariableError):
        raise
    except ParseError:
        raise p.furthest from None
    return f
