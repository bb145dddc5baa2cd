"""Time-bounded STL formulas: syntax tree, text parser, negation normal form,
horizon and discrete robustness.

Grammar (lowest to highest precedence)::

    formula := conj ("or" conj)*
    conj    := until ("and" until)*
    until   := unary ("U" interval unary)*
    unary   := "not" unary | "G" interval unary | "F" interval unary
             | "(" formula ")" | IDENT
    interval := "[" INT "," INT "]"

``and``/``or`` chains are flattened into n-ary nodes, ``U`` is left associative.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from .predicates import Predicate, SymbolPredicate


class STLSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedNegation(ValueError):
    """Raised when negation normal form would need a release operator."""


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self):
        for b in (self.lo, self.hi):
            if isinstance(b, bool) or not isinstance(b, (int, np.integer)):
                raise ValueError(f"interval bounds must be integers, got {b!r}")
        if self.lo < 0:
            raise ValueError("interval bounds must be non-negative")
        if self.lo > self.hi:
            raise ValueError(f"reversed interval [{self.lo},{self.hi}]")

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __str__(self):
        return f"[{self.lo},{self.hi}]"


class Formula:
    """Base class of all syntax tree nodes."""

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class Pred(Formula):
    predicate: Predicate

    def __str__(self):
        return self.predicate.name


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    def __str__(self):
        return f"not {_wrap(self.child)}"


@dataclass(frozen=True)
class And(Formula):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")

    def __str__(self):
        return " and ".join(_wrap(c) for c in self.children)


@dataclass(frozen=True)
class Or(Formula):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")

    def __str__(self):
        return " or ".join(_wrap(c) for c in self.children)


@dataclass(frozen=True)
class Always(Formula):
    interval: Interval
    child: Formula

    def __str__(self):
        return f"G{self.interval} {_wrap(self.child)}"


@dataclass(frozen=True)
class Eventually(Formula):
    interval: Interval
    child: Formula

    def __str__(self):
        return f"F{self.interval} {_wrap(self.child)}"


@dataclass(frozen=True)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_wrap(self.left)} U{self.interval} {_wrap(self.right)}"


def _wrap(f: Formula) -> str:
    if isinstance(f, (Pred, Not, Always, Eventually)):
        return str(f)
    return f"({f})"


@dataclass(frozen=True)
class Trajectory:
    """States ``(n, T+1)`` and inputs ``(m, T+1)``, one column per time step."""

    states: np.ndarray
    inputs: Optional[np.ndarray] = None

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = self.inputs
        if inputs is None:
            inputs = np.zeros((0, states.shape[1]))
        inputs = np.asarray(inputs, dtype=float).reshape(-1, states.shape[1]) \
            if np.size(inputs) else np.zeros((0, states.shape[1]))
        if inputs.shape[1] != states.shape[1]:
            raise ValueError("states and inputs must have the same number of columns")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def T(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(?P<num>-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)|(?P<id>[A-Za-z_~][A-Za-z0-9_~]*)|(?P<sym>[()\[\],]))")
_KEYWORDS = {"not", "and", "or"}
_TEMPORAL = {"G", "F", "U"}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise STLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, predicates: Optional[Mapping[str, Predicate]]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.predicates = predicates

    def peek(self, offset=0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise STLSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def at_temporal(self, name):
        kind, val, _ = self.peek()
        return kind == "id" and val == name and self.peek(1)[1] == "["

    def parse(self) -> Formula:
        f = self.formula()
        kind, val, pos = self.peek()
        if kind != "end":
            raise STLSyntaxError(f"unexpected token {val!r}", pos)
        return f

    def formula(self):
        parts = [self.conj()]
        while self.peek()[1] == "or":
            self.take()
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(_splice(parts, Or))

    def conj(self):
        parts = [self.until()]
        while self.peek()[1] == "and":
            self.take()
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else And(_splice(parts, And))

    def until(self):
        left = self.unary()
        while self.peek()[0] == "id" and self.peek()[1] == "U":
            _, _, pos = self.peek()
            if self.peek(1)[1] != "[":
                raise STLSyntaxError("until requires an interval", pos)
            self.take()
            interval = self.interval()
            right = self.unary()
            left = Until(interval, left, right)
        return left

    def unary(self):
        kind, val, pos = self.peek()
        if val == "not" and kind == "id":
            self.take()
            return Not(self.unary())
        if self.at_temporal("G"):
            self.take()
            return Always(self.interval(), self.unary())
        if self.at_temporal("F"):
            self.take()
            return Eventually(self.interval(), self.unary())
        if val == "(":
            self.take()
            f = self.formula()
            self.expect(")")
            return f
        if kind == "id" and val not in _KEYWORDS:
            if val == "U":
                raise STLSyntaxError("until requires an interval", pos)
            self.take()
            return Pred(self.bind(val, pos))
        raise STLSyntaxError(f"unexpected token {val or 'end of input'!r}", pos)

    def interval(self) -> Interval:
        _, _, start = self.peek()
        self.expect("[")
        lo = self.integer()
        self.expect(",")
        hi = self.integer()
        self.expect("]")
        try:
            return Interval(lo, hi)
        except ValueError as exc:
            raise STLSyntaxError(str(exc), start) from None

    def integer(self) -> int:
        kind, val, pos = self.take()
        if kind != "num":
            raise STLSyntaxError(f"expected an integer bound, found {val!r}", pos)
        if not re.fullmatch(r"-?\d+", val):
            raise STLSyntaxError(f"interval bounds must be integers, got {val}", pos)
        if int(val) < 0:
            raise STLSyntaxError("interval bounds must be non-negative", pos)
        return int(val)

    def bind(self, name, pos) -> Predicate:
        if self.predicates is None:
            return SymbolPredicate(name)
        negated = name.startswith("~")
        base = name[1:] if negated else name
        if base not in self.predicates:
            raise STLSyntaxError(f"unknown predicate {base!r}", pos)
        p = self.predicates[base]
        return p.negate() if negated else p


def _splice(parts, cls):
    out = []
    for p in parts:
        if isinstance(p, cls):
            out.extend(p.children)
        else:
            out.append(p)
    return tuple(out)


def parse(text: str, predicates: Optional[Mapping[str, Predicate]] = None) -> Formula:
    """Parse formula text. Without ``predicates`` the leaves are unbound symbols."""
    return _Parser(text, predicates).parse()


# --------------------------------------------------------------------------
# structure


def to_nnf(f: Formula) -> Formula:
    """Push negations down to predicates; negated predicates flip the sign of h."""
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Pred):
        return Pred(f.predicate.negate()) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    if isinstance(f, And):
        kids = tuple(_nnf(c, neg) for c in f.children)
        return Or(kids) if neg else And(kids)
    if isinstance(f, Or):
        kids = tuple(_nnf(c, neg) for c in f.children)
        return And(kids) if neg else Or(kids)
    if isinstance(f, Always):
        child = _nnf(f.child, neg)
        return Eventually(f.interval, child) if neg else Always(f.interval, child)
    if isinstance(f, Eventually):
        child = _nnf(f.child, neg)
        return Always(f.interval, child) if neg else Eventually(f.interval, child)
    if isinstance(f, Until):
        if neg:
            raise UnsupportedNegation("negation of an until subformula is not supported")
        return Until(f.interval, _nnf(f.left, False), _nnf(f.right, False))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Pred):
        return True
    if isinstance(f, Not):
        return False
    return all(is_nnf(c) for c in children(f))


def children(f: Formula) -> tuple:
    if isinstance(f, Pred):
        return ()
    if isinstance(f, (Not, Always, Eventually)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.left, f.right)
    raise TypeError(f"not a formula: {f!r}")


def horizon(f: Formula) -> int:
    """Largest time index the formula may reference when evaluated at t=0."""
    if isinstance(f, Pred):
        return 0
    if isinstance(f, Not):
        return horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(horizon(c) for c in f.children)
    if isinstance(f, (Always, Eventually)):
        return f.interval.hi + horizon(f.child)
    if isinstance(f, Until):
        return f.interval.hi + max(horizon(f.left), horizon(f.right))
    raise TypeError(f"not a formula: {f!r}")


def predicates_of(f: Formula) -> dict:
    out = {}
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Pred):
            out[g.predicate.name] = g.predicate
        else:
            stack.extend(children(g))
    return out


# --------------------------------------------------------------------------
# discrete robustness

TrajectoryLike = Union[Trajectory, np.ndarray]


def _states(x: TrajectoryLike) -> np.ndarray:
    return x.states if isinstance(x, Trajectory) else np.atleast_2d(np.asarray(x, dtype=float))


def eval_robustness(f: Formula, x: TrajectoryLike, t: int = 0) -> float:
    """Robustness of ``f`` on ``x`` at step ``t`` with exact min/max.

    Until uses the tree convention: the left operand must hold on
    ``t .. t+t'-1`` and the right operand at ``t+t'``.
    """
    states = _states(x)
    T = states.shape[1] - 1
    if t < 0 or t + horizon(f) > T:
        raise ValueError(f"formula horizon {horizon(f)} from t={t} exceeds trajectory length T={T}")
    return _rob(f, states, t)


def _rob(f: Formula, states: np.ndarray, t: int) -> float:
    if isinstance(f, Pred):
        return float(f.predicate.value(states[:, t]))
    if isinstance(f, Not):
        return -_rob(f.child, states, t)
    if isinstance(f, And):
        return min(_rob(c, states, t) for c in f.children)
    if isinstance(f, Or):
        return max(_rob(c, states, t) for c in f.children)
    if isinstance(f, Always):
        return min(_rob(f.child, states, t + s) for s in f.interval)
    if isinstance(f, Eventually):
        return max(_rob(f.child, states, t + s) for s in f.interval)
    if isinstance(f, Until):
        left = [_rob(f.left, states, t + j) for j in range(f.interval.hi)]
        best = -np.inf
        for s in f.interval:
            branch = min([_rob(f.right, states, t + s)] + left[:s])
            best = max(best, branch)
        return float(best)
    raise TypeError(f"not a formula: {f!r}")
