"""Smooth state predicates ``h(x) >= 0``.

Every predicate evaluates on a single state of shape ``(n,)`` or on a batch
of states stored column-wise as ``(n, k)``; gradients follow the same layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def _columns(x):
    x = np.asarray(x, dtype=float)
    return x, x.ndim == 1


class Predicate:
    """Base class. Subclasses implement ``_value`` and ``_gradient`` on (n, k) arrays."""

    name: str

    def value(self, x):
        x, single = _columns(x)
        out = self._value(x[:, None] if single else x)
        return float(out[0]) if single else out

    def gradient(self, x):
        x, single = _columns(x)
        out = self._gradient(x[:, None] if single else x)
        return out[:, 0] if single else out

    def __call__(self, x):
        return self.value(x)

    def negate(self) -> "Predicate":
        return NegatedPredicate(self)

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class SymbolPredicate(Predicate):
    """Placeholder produced when a formula is parsed without bindings."""

    name: str

    def _value(self, x):
        raise ValueError(f"predicate {self.name!r} is not bound to a function")

    _gradient = _value

    def negate(self):
        if self.name.startswith("~"):
            return SymbolPredicate(self.name[1:])
        return SymbolPredicate("~" + self.name)

    def __eq__(self, other):
        return isinstance(other, SymbolPredicate) and other.name == self.name

    def __hash__(self):
        return hash(("sym", self.name))


@dataclass(frozen=True)
class CirclePredicate(Predicate):
    """``h = r^2 - |p - c|^2`` on the position coordinates (inside=True), or its negation."""

    name: str
    center: tuple
    radius: float
    inside: bool = True
    indices: tuple = (0, 1)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.center) != len(self.indices):
            raise ValueError("center and indices must have equal length")

    def _value(self, x):
        # elementwise in coordinate order; CompiledTree repeats these exact operations
        sq = None
        for i, c in zip(self.indices, self.center):
            d = x[i] - c
            sq = d * d if sq is None else sq + d * d
        h = self.radius * self.radius - sq
        return h if self.inside else -h

    def _gradient(self, x):
        g = np.zeros_like(x)
        d = x[list(self.indices), :] - np.asarray(self.center)[:, None]
        g[list(self.indices), :] = -2.0 * d if self.inside else 2.0 * d
        return g

    def negate(self):
        return CirclePredicate(_negated_name(self.name), self.center, self.radius,
                               not self.inside, self.indices)


@dataclass(frozen=True)
class HalfplanePredicate(Predicate):
    """``h = normal . p - offset`` on the position coordinates."""

    name: str
    normal: tuple
    offset: float
    indices: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(float(c) for c in self.normal))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "offset", float(self.offset))
        if not any(self.normal):
            raise ValueError("halfplane normal must be non-zero")
        if len(self.normal) != len(self.indices):
            raise ValueError("normal and indices must have equal length")

    def _value(self, x):
        acc = None
        for i, a in zip(self.indices, self.normal):
            acc = a * x[i] if acc is None else acc + a * x[i]
        return acc - self.offset

    def _gradient(self, x):
        g = np.zeros_like(x)
        g[list(self.indices), :] = np.asarray(self.normal)[:, None]
        return g

    def negate(self):
        return HalfplanePredicate(_negated_name(self.name), tuple(-c for c in self.normal),
                                  -self.offset, self.indices)


@dataclass(frozen=True, eq=False)
class FunctionPredicate(Predicate):
    """Wraps user callables ``h(x) -> float`` and ``grad_h(x) -> (n,)`` on single states."""

    name: str
    h: Callable
    grad_h: Callable

    def _value(self, x):
        return np.array([float(self.h(x[:, j])) for j in range(x.shape[1])])

    def _gradient(self, x):
        return np.stack([np.asarray(self.grad_h(x[:, j]), dtype=float)
                         for j in range(x.shape[1])], axis=1)


@dataclass(frozen=True)
class NegatedPredicate(Predicate):
    """``-h`` for an arbitrary predicate; negating twice returns the original."""

    base: Predicate
    name: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "name", _negated_name(self.base.name))

    def _value(self, x):
        return -self.base._value(x)

    def _gradient(self, x):
        return -self.base._gradient(x)

    def negate(self):
        return self.base


def _negated_name(name: str) -> str:
    return name[1:] if name.startswith("~") else "~" + name


def circle_predicate(center: Sequence[float], radius: float, inside: bool = True,
                     name: Optional[str] = None, indices=(0, 1)) -> Predicate:
    if name is None:
        name = f"circle({center[0]:g},{center[1]:g};{radius:g})"
        if not inside:
            name = "~" + name
    return CirclePredicate(name, tuple(center), radius, inside, tuple(indices))


def halfplane_predicate(normal: Sequence[float], offset: float, name: Optional[str] = None,
                        indices=(0, 1)) -> Predicate:
    if name is None:
        name = "halfplane(" + ",".join(f"{c:g}" for c in normal) + f";{offset:g})"
    return HalfplanePredicate(name, tuple(normal), offset, tuple(indices))
