"""Direct transcription of STL trajectory optimization into an :class:`NlpProblem`.

Decision vector layout: states ``x_0..x_T`` (time-major), inputs ``u_0..u_T``,
then, for the exact method, one rho per tree node (rho[0] is the root) and the
lambda weights of all max nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .formula import Trajectory
from .nlp import DiffFunction, LinearFunction, NlpProblem, QuadraticFunction, ShiftedFunction, SumFunction, VarSpace
from .reformulation import Assignment, Reformulation
from .smooth import compiled_smooth
from .tree import CompiledTree


@dataclass(frozen=True, eq=False)
class Weights:
    alpha: float
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be a symmetric square matrix")
            if M.size and np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True, eq=False)
class Boxes:
    state_lo: np.ndarray
    state_hi: np.ndarray
    input_lo: np.ndarray
    input_hi: np.ndarray

    @classmethod
    def make(cls, n, m, state=None, inputs=None, default_state=20.0):
        def split(box, dim, default):
            if box is None:
                return np.full(dim, -default), np.full(dim, default)
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (dim,)).copy() for b in box)
            if np.any(lo > hi):
                raise ValueError("box lower bound exceeds upper bound")
            return lo, hi

        slo, shi = split(state, n, default_state)
        ilo, ihi = split(inputs, m, np.inf)
        return cls(slo, shi, ilo, ihi)


@dataclass(frozen=True)
class Layout:
    n: int
    m: int
    T: int
    n_rho: int = 0
    n_lambda: int = 0

    @property
    def x(self) -> slice:
        return slice(0, (self.T + 1) * self.n)

    @property
    def u(self) -> slice:
        s = self.x.stop
        return slice(s, s + (self.T + 1) * self.m)

    @property
    def rho(self) -> slice:
        s = self.u.stop
        return slice(s, s + self.n_rho)

    @property
    def lam(self) -> slice:
        s = self.rho.stop
        return slice(s, s + self.n_lambda)

    @property
    def size(self) -> int:
        return self.lam.stop

    def state_index(self, t, i=None):
        t = np.asarray(t)
        if i is None:
            return t[..., None] * self.n + np.arange(self.n)
        return t * self.n + i

    def input_index(self, t, j=None):
        t = np.asarray(t)
        if j is None:
            return self.u.start + t[..., None] * self.m + np.arange(self.m)
        return self.u.start + t * self.m + j

    def states(self, z) -> np.ndarray:
        return z[self.x].reshape(self.T + 1, self.n).T

    def inputs(self, z) -> np.ndarray:
        return z[self.u].reshape(self.T + 1, self.m).T

    def trajectory(self, z) -> Trajectory:
        return Trajectory(self.states(z).copy(), self.inputs(z).copy())

    def assignment(self, z) -> Assignment:
        return Assignment(z[self.rho].copy(), z[self.lam].copy())

    def pack(self, traj: Trajectory, assignment: Optional[Assignment] = None) -> np.ndarray:
        z = np.zeros(self.size)
        if traj.states.shape != (self.n, self.T + 1):
            raise ValueError(f"expected states of shape {(self.n, self.T + 1)}, got {traj.states.shape}")
        z[self.x] = traj.states.T.ravel()
        if traj.m:
            z[self.u] = traj.inputs.T.ravel()
        if self.n_rho or self.n_lambda:
            if assignment is None:
                raise ValueError("auxiliary variables need an assignment")
            z[self.rho] = assignment.rho
            z[self.lam] = assignment.lam
        return z


class DynamicsFunction(DiffFunction):
    """Rows ``x_{t+1} - f(x_t, u_t)`` for t = 0..T-1, dense per-step Jacobian blocks."""

    def __init__(self, dynamics, layout: Layout, n_vars: int):
        n, m, T = layout.n, layout.m, layout.T
        self.dynamics, self.layout = dynamics, layout
        t = np.arange(T)
        row = (t[:, None] * n + np.arange(n))                       # (T, n)
        nxt = layout.state_index(t + 1)                              # (T, n)
        cur = layout.state_index(t)
        inp = layout.input_index(t)
        rows = np.concatenate([row[:, :, None],
                               np.repeat(row[:, :, None], n, axis=2),
                               np.repeat(row[:, :, None], m, axis=2)], axis=2)
        cols = np.concatenate([nxt[:, :, None],
                               np.repeat(cur[:, None, :], n, axis=1),
                               np.repeat(inp[:, None, :], n, axis=1)], axis=2)
        super().__init__("dynamics", n * T, n_vars, rows.ravel(), cols.ravel())

    def value(self, z):
        X, U = self.layout.states(z), self.layout.inputs(z)
        return (X[:, 1:] - self.dynamics.step(X[:, :-1], U[:, :-1])).T.ravel()

    def jac_values(self, z):
        X, U = self.layout.states(z), self.layout.inputs(z)
        fx, fu = self.dynamics.jacobians(X[:, :-1], U[:, :-1])    # (T, n, n), (T, n, m)
        ones = np.ones(fx.shape[:2] + (1,))
        return np.concatenate([ones, -fx, -fu], axis=2).ravel()


class LeafFunction(DiffFunction):
    """Rows ``h(x_t) - rho_v`` for every leaf."""

    def __init__(self, reform: Reformulation, layout: Layout, n_vars: int):
        ct = reform.compiled
        self.ct, self.layout = ct, layout
        L, n = len(ct.leaf_ids), layout.n
        rows = np.repeat(np.arange(L), n + 1)
        cols = np.concatenate([layout.state_index(ct.leaf_t),
                               (layout.rho.start + ct.leaf_ids)[:, None]], axis=1).ravel()
        super().__init__("leaf_lower", L, n_vars, rows, cols)

    def value(self, z):
        return self.ct.leaf_values(self.layout.states(z)) - z[self.layout.rho][self.ct.leaf_ids]

    def jac_values(self, z):
        g = self.ct.leaf_gradients(self.layout.states(z))
        return np.vstack([g, -np.ones(g.shape[1])]).T.ravel()


class MaxComboFunction(DiffFunction):
    """Rows ``sum_j lam_j rho_{u_j} - rho_v`` for every max node."""

    def __init__(self, reform: Reformulation, layout: Layout, n_vars: int):
        self.r, self.layout = reform, layout
        r = reform
        self._starts = np.flatnonzero(np.r_[True, r.max_seg[1:] != r.max_seg[:-1]]) \
            if len(r.max_seg) else np.zeros(0, dtype=int)
        lam_cols = layout.lam.start + r.max_lambda
        rho_cols = layout.rho.start + r.max_child
        rows = np.concatenate([r.max_seg, r.max_seg, np.arange(len(r.max_nodes))])
        cols = np.concatenate([lam_cols, rho_cols, layout.rho.start + r.max_nodes])
        super().__init__("max_combo", len(r.max_nodes), n_vars, rows, cols)

    def value(self, z):
        rho, lam = z[self.layout.rho], z[self.layout.lam]
        r = self.r
        return np.add.reduceat(lam[r.max_lambda] * rho[r.max_child], self._starts) - rho[r.max_nodes]

    def jac_values(self, z):
        rho, lam = z[self.layout.rho], z[self.layout.lam]
        r = self.r
        return np.concatenate([rho[r.max_child], lam[r.max_lambda], -np.ones(len(r.max_nodes))])


class SmoothRobustnessFunction(DiffFunction):
    """Scalar soft robustness of a compiled tree as a function of the states."""

    def __init__(self, ct: CompiledTree, k: float, layout: Layout, n_vars: int):
        self.ct, self.k, self.layout = ct, float(k), layout
        cols = np.arange(layout.x.start, layout.x.stop)
        super().__init__("smooth_robustness", 1, n_vars, np.zeros(len(cols), dtype=int), cols)

    def value(self, z):
        return np.array([compiled_smooth(self.ct, self.layout.states(z), self.k)])

    def jac_values(self, z):
        _, g = compiled_smooth(self.ct, self.layout.states(z), self.k, gradient=True)
        return g.T.ravel()


def _check_inputs(dynamics, x0, T, reform_time, weights):
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (dynamics.n,):
        raise ValueError(f"x0 has dimension {x0.size}, dynamics have n={dynamics.n}")
    if T < 0:
        raise ValueError("horizon must be non-negative")
    if reform_time is not None and reform_time > T:
        raise ValueError(f"formula reaches t={reform_time} beyond the horizon T={T}")
    if weights.Q.shape != (dynamics.n, dynamics.n) or weights.R.shape != (dynamics.m, dynamics.m):
        raise ValueError("weight matrices do not match the state/input dimensions")
    return x0


def _common(dynamics, x0, T, weights, boxes, layout, vs):
    n, m = dynamics.n, dynamics.m
    N = vs.size
    # quadratic tracking terms over t = 0..T
    H = sp.block_diag([sp.kron(sp.eye(T + 1), weights.Q), sp.kron(sp.eye(T + 1), weights.R),
                       sp.csr_matrix((N - layout.u.stop, N - layout.u.stop))], format="csr")
    H.eliminate_zeros()
    eqs = []
    if T > 0:
        if dynamics.linear:
            t = np.arange(T)
            A = sp.lil_matrix((n * T, N))
            for s in t:
                rows = slice(s * n, (s + 1) * n)
                A[rows, layout.state_index(s + 1)] = np.eye(n)
                A[rows, layout.state_index(s)] = -dynamics.A
                A[rows, layout.input_index(s)] = -dynamics.B
            eqs.append(LinearFunction("dynamics", A))
        else:
            eqs.append(DynamicsFunction(dynamics, layout, N))
    fix = sp.coo_matrix((np.ones(n), (np.arange(n), layout.state_index(0))), shape=(n, N))
    eqs.append(LinearFunction("initial_state", fix, -x0))
    return H, eqs


def _varspace(layout: Layout, boxes: Boxes, n_rho=0, n_lambda=0) -> VarSpace:
    T = layout.T
    vs = VarSpace()
    vs.add("x", (T + 1) * layout.n, np.tile(boxes.state_lo, T + 1), np.tile(boxes.state_hi, T + 1))
    vs.add("u", (T + 1) * layout.m, np.tile(boxes.input_lo, T + 1), np.tile(boxes.input_hi, T + 1))
    if n_rho:
        vs.add("rho", n_rho)
    if n_lambda:
        vs.add("lambda", n_lambda, 0.0, 1.0)
    return vs


def assemble(dynamics, x0, T: int, weights: Weights, boxes: Boxes,
             reform: Optional[Reformulation], margin: float = 0.0) -> NlpProblem:
    """Exact smooth NLP: ``min -alpha rho_root + sum x'Qx + u'Ru`` subject to the
    dynamics, the fixed initial state, the boxes and every reformulation constraint.

    ``margin`` tightens the root constraint to ``rho_root >= margin``. A margin a
    few times the solver's feasibility tolerance keeps the discrete robustness of
    an approximately feasible solution non-negative.
    """
    max_t = reform.compiled.max_time if reform is not None else None
    x0 = _check_inputs(dynamics, x0, T, max_t, weights)
    n_rho = reform.n_rho if reform is not None else 0
    n_lam = reform.n_lambda if reform is not None else 0
    layout = Layout(dynamics.n, dynamics.m, T, n_rho, n_lam)
    vs = _varspace(layout, boxes, n_rho, n_lam)
    N = vs.size
    H, eqs = _common(dynamics, x0, T, weights, boxes, layout, vs)
    g = np.zeros(N)
    ineqs = []
    if reform is not None:
        g[layout.rho.start] = -weights.alpha
        r = reform
        ineqs.append(LeafFunction(r, layout, N))
        if len(r.min_parent):
            k = len(r.min_parent)
            A = sp.coo_matrix((np.r_[np.ones(k), -np.ones(k)],
                               (np.r_[np.arange(k), np.arange(k)],
                                np.r_[layout.rho.start + r.min_child, layout.rho.start + r.min_parent])),
                              shape=(k, N))
            ineqs.append(LinearFunction("min_child", A))
        if r.n_lambda:
            M = len(r.max_nodes)
            S = sp.coo_matrix((np.ones(r.n_lambda), (r.max_seg, layout.lam.start + r.max_lambda)),
                              shape=(M, N))
            eqs.append(LinearFunction("simplex_sum", S, -np.ones(M)))
            ineqs.append(MaxComboFunction(r, layout, N))
        root = sp.coo_matrix(([1.0], ([0], [layout.rho.start])), shape=(1, N))
        ineqs.append(LinearFunction("root_nonneg", root, [-float(margin)]))
    objective = QuadraticFunction("objective", H, g)
    simplices = None
    if reform is not None and reform.n_lambda:
        simplices = (layout.lam.start + reform.max_lambda, reform.max_seg)
    return NlpProblem(vs, objective, eqs, ineqs, layout=layout,
                      meta={"method": "exact", "alpha": weights.alpha}, simplices=simplices)


def assemble_smooth(dynamics, x0, T: int, weights: Weights, boxes: Boxes, tree, k: float,
                    margin: float = 0.0) -> NlpProblem:
    """Baseline NLP with the soft robustness in place of the exact one (``>= margin``)."""
    ct = tree if isinstance(tree, CompiledTree) else CompiledTree(tree)
    x0 = _check_inputs(dynamics, x0, T, ct.max_time, weights)
    layout = Layout(dynamics.n, dynamics.m, T)
    vs = _varspace(layout, boxes)
    N = vs.size
    H, eqs = _common(dynamics, x0, T, weights, boxes, layout, vs)
    smooth = SmoothRobustnessFunction(ct, k, layout, N)
    quad = QuadraticFunction("tracking", H, np.zeros(N))
    objective = SumFunction("objective", [(1.0, quad), (-weights.alpha, smooth)])
    cons = smooth if margin == 0 else ShiftedFunction("smooth_robustness", smooth, margin)
    return NlpProblem(vs, objective, eqs, [cons], layout=layout,
                      meta={"method": "smooth-approx", "alpha": weights.alpha, "k": float(k)})


def tracking_cost(traj: Trajectory, weights: Weights) -> float:
    X, U = traj.states, traj.inputs
    return float(np.einsum("it,ij,jt->", X, weights.Q, X) + np.einsum("it,ij,jt->", U, weights.R, U))


def original_objective(traj: Trajectory, robustness: float, weights: Weights) -> float:
    """``-alpha * rho + sum x'Qx + u'Ru`` with the given (discrete) robustness."""
    return -weights.alpha * robustness + tracking_cost(traj, weights)
