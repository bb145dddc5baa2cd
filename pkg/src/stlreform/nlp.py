"""Smooth NLP representation with exact sparse derivatives.

Every objective or constraint block is a :class:`DiffFunction`: a vector-valued
map with a fixed sparsity pattern ``(rows, cols)``. Jacobian values are returned
in pattern order, so transposed products reduce to one ``np.bincount``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


@dataclass
class VarSpace:
    """Ordered scalar decision variables with bounds, organised in named groups."""

    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)

    def add(self, group: str, count: int, lb=-np.inf, ub=np.inf, names=None) -> slice:
        if group in self.groups:
            raise ValueError(f"duplicate variable group {group!r}")
        start = len(self.names)
        self.names.extend(names if names is not None else [f"{group}[{i}]" for i in range(count)])
        self.lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (count,)).tolist())
        self.ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (count,)).tolist())
        self.groups[group] = slice(start, start + count)
        return self.groups[group]

    @property
    def size(self) -> int:
        return len(self.names)

    def bounds(self):
        return np.array(self.lb), np.array(self.ub)


class DiffFunction:
    """Vector-valued smooth function of the full decision vector."""

    name = "f"
    linear = False

    def __init__(self, name: str, size: int, n_vars: int, rows, cols):
        self.name = name
        self.size = int(size)
        self.n_vars = int(n_vars)
        self.rows = np.asarray(rows, dtype=int)
        self.cols = np.asarray(cols, dtype=int)

    def value(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac_values(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, z: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((self.jac_values(z), (self.rows, self.cols)),
                             shape=(self.size, self.n_vars))

    def vjp(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.bincount(self.cols, weights=self.jac_values(z) * v[self.rows],
                           minlength=self.n_vars)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} size={self.size} nnz={len(self.rows)}>"


class LinearFunction(DiffFunction):
    """``A z + b`` with sparse A."""

    linear = True

    def __init__(self, name, A, b=None):
        A = sp.coo_matrix(A)
        A.sum_duplicates()
        super().__init__(name, A.shape[0], A.shape[1], A.row, A.col)
        self._data = A.data.astype(float)
        self._A = A.tocsr()
        self._b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)

    def value(self, z):
        return self._A @ z + self._b

    def jac_values(self, z):
        return self._data


class QuadraticFunction(DiffFunction):
    """Scalar ``z' H z + g' z`` with sparse symmetric H."""

    def __init__(self, name, H, g):
        H = sp.csr_matrix(H)
        g = np.asarray(g, dtype=float)
        cols = np.union1d(np.unique(H.tocoo().row), np.flatnonzero(g))
        super().__init__(name, 1, len(g), np.zeros(len(cols), dtype=int), cols)
        self._H = H
        self._g = g

    def value(self, z):
        return np.array([z @ (self._H @ z) + self._g @ z])

    def jac_values(self, z):
        return (2.0 * (self._H @ z) + self._g)[self.cols]


class SumFunction(DiffFunction):
    """Scalar weighted sum of scalar DiffFunctions."""

    def __init__(self, name, terms):
        self.terms = [(float(c), f) for c, f in terms]
        n_vars = self.terms[0][1].n_vars
        cols = np.unique(np.concatenate([f.cols for _, f in self.terms]))
        super().__init__(name, 1, n_vars, np.zeros(len(cols), dtype=int), cols)
        self.linear = all(f.linear for _, f in self.terms)

    def value(self, z):
        return sum(c * f.value(z) for c, f in self.terms)

    def jac_values(self, z):
        g = np.zeros(self.n_vars)
        one = np.ones(1)
        for c, f in self.terms:
            g += c * f.vjp(z, one)
        return g[self.cols]


class ShiftedFunction(DiffFunction):
    """``f(z) - offset``; shares the pattern and Jacobian of ``f``."""

    def __init__(self, name, f: DiffFunction, offset):
        super().__init__(name, f.size, f.n_vars, f.rows, f.cols)
        self.f = f
        self.offset = np.broadcast_to(np.asarray(offset, dtype=float), (f.size,))
        self.linear = f.linear

    def value(self, z):
        return self.f.value(z) - self.offset

    def jac_values(self, z):
        return self.f.jac_values(z)


@dataclass
class NlpProblem:
    """``min objective(z)  s.t.  eq(z) = 0, ineq(z) >= 0, lb <= z <= ub``.

    ``simplices`` optionally marks groups of variables that the equalities and
    bounds confine to probability simplices, as ``(index, block)`` arrays. A
    solver may use it to keep those groups on their simplices throughout.
    """

    vars: VarSpace
    objective: DiffFunction
    eq_constraints: list
    ineq_constraints: list
    layout: Optional[object] = None
    meta: dict = field(default_factory=dict)
    simplices: Optional[tuple] = None

    def __post_init__(self):
        for f in [self.objective, *self.eq_constraints, *self.ineq_constraints]:
            if f.n_vars != self.vars.size:
                raise ValueError(f"{f.name} is defined on {f.n_vars} variables, "
                                 f"the problem has {self.vars.size}")
        self._eq = _Stack(self.eq_constraints, self.vars.size)
        self._ineq = _Stack(self.ineq_constraints, self.vars.size)

    @property
    def n_vars(self) -> int:
        return self.vars.size

    @property
    def n_eq(self) -> int:
        return self._eq.size

    @property
    def n_ineq(self) -> int:
        return self._ineq.size

    def functions(self):
        return [self.objective, *self.eq_constraints, *self.ineq_constraints]

    def f(self, z) -> float:
        return float(self.objective.value(z)[0])

    def grad(self, z) -> np.ndarray:
        return self.objective.vjp(z, np.ones(1))

    def c_eq(self, z):
        return self._eq.value(z)

    def c_ineq(self, z):
        return self._ineq.value(z)

    def eq_vjp(self, z, v):
        return self._eq.vjp(z, v)

    def ineq_vjp(self, z, v):
        return self._ineq.vjp(z, v)

    def violation(self, z) -> float:
        """Largest violation of equalities, inequalities and bounds."""
        lb, ub = self.vars.bounds()
        parts = [0.0]
        if self.n_eq:
            parts.append(float(np.abs(self.c_eq(z)).max()))
        if self.n_ineq:
            parts.append(float(max(0.0, -self.c_ineq(z).min())))
        parts.append(float(max(0.0, np.max(lb - z, initial=0.0), np.max(z - ub, initial=0.0))))
        return max(parts)

    def summary(self) -> str:
        lines = [f"variables: {self.n_vars}"]
        for g, s in self.vars.groups.items():
            lines.append(f"  {g}: {s.stop - s.start}")
        lines.append(f"objective: {self.objective.name}")
        lines.append(f"equality rows: {self.n_eq}")
        for f in self.eq_constraints:
            lines.append(f"  {f.name}: {f.size} rows, {len(f.rows)} nonzeros")
        lines.append(f"inequality rows: {self.n_ineq}")
        for f in self.ineq_constraints:
            lines.append(f"  {f.name}: {f.size} rows, {len(f.rows)} nonzeros")
        return "\n".join(lines)


class _Stack:
    def __init__(self, funcs, n_vars):
        self.funcs = funcs
        self.n_vars = n_vars
        self.offsets = np.cumsum([0] + [f.size for f in funcs])
        self.size = int(self.offsets[-1])
        if funcs:
            self.rows = np.concatenate([f.rows + o for f, o in zip(funcs, self.offsets)])
            self.cols = np.concatenate([f.cols for f in funcs])
        else:
            self.rows = self.cols = np.zeros(0, dtype=int)

    def value(self, z):
        if not self.funcs:
            return np.zeros(0)
        return np.concatenate([f.value(z) for f in self.funcs])

    def vjp(self, z, v):
        if not self.funcs:
            return np.zeros(self.n_vars)
        data = np.concatenate([f.jac_values(z) for f in self.funcs])
        return np.bincount(self.cols, weights=data * v[self.rows], minlength=self.n_vars)


def _color_columns(f: DiffFunction) -> np.ndarray:
    """Greedy colouring: columns sharing a row get different colours."""
    cols_of_row = {}
    for r, c in zip(f.rows.tolist(), f.cols.tolist()):
        cols_of_row.setdefault(r, set()).add(c)
    rows_of_col = {}
    for r, cs in cols_of_row.items():
        for c in cs:
            rows_of_col.setdefault(c, []).append(r)
    color = {}
    row_colors = {r: set() for r in cols_of_row}
    for c in sorted(rows_of_col):
        used = set().union(*(row_colors[r] for r in rows_of_col[c]))
        k = 0
        while k in used:
            k += 1
        color[c] = k
        for r in rows_of_col[c]:
            row_colors[r].add(k)
    out = np.full(f.n_vars, -1, dtype=int)
    for c, k in color.items():
        out[c] = k
    return out


def fd_check(f: DiffFunction, point, step: Optional[float] = None) -> float:
    """Max relative error between the exact Jacobian and central differences.

    The per-coordinate step is ``step * (1 + |z_i|)`` with ``step = 1e-6`` by
    default. Errors are ``|fd - exact| / max(1, |exact|)``. Columns that never
    share a row are perturbed together, which keeps the check cheap on sparse
    blocks. Entries outside the declared pattern must have zero derivative.
    """
    z = np.asarray(point, dtype=float)
    step = 1e-6 if step is None else step
    J = f.jacobian(z).tocoo()
    J.sum_duplicates()
    color = getattr(f, "_fd_colors", None)
    if color is None:
        color = _color_columns(f)
        f._fd_colors = color
    h = step * (1.0 + np.abs(z))
    n_colors = int(color.max()) + 1 if np.any(color >= 0) else 0
    diffs = np.empty((n_colors, f.size))
    for k in range(n_colors):
        d = np.where(color == k, h, 0.0)
        diffs[k] = f.value(z + d) - f.value(z - d)
    worst = 0.0
    if J.nnz:
        fd = diffs[color[J.col], J.row] / (2.0 * h[J.col])
        worst = float(np.max(np.abs(fd - J.data) / np.maximum(1.0, np.abs(J.data))))
    # outside the pattern: a random direction must not change the value beyond FD noise
    free = np.flatnonzero(color < 0)
    if len(free):
        d = np.zeros_like(z)
        d[free] = h[free]
        diff = (f.value(z + d) - f.value(z - d)) / 2.0
        scale = np.maximum(1.0, np.abs(f.value(z)))
        worst = max(worst, float(np.max(np.abs(diff) / scale / step)))
    return worst
