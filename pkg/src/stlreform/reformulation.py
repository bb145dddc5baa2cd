"""Exact smooth reformulation of a robustness tree.

A depth-first traversal gives every node a robustness variable ``rho_v``. Leaves
bound it by the predicate value, min nodes by each child, and max nodes by a
convex combination of their children with simplex weights ``lambda``. The root
variable must be non-negative. For a fixed trajectory the constraints admit an
assignment with ``rho_root = r`` iff the tree robustness is at least ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .formula import _states
from .predicates import Predicate
from .tree import LEAF, MAX, MIN, CompiledTree, TreeNode

LEAF_LOWER = "LeafLower"
MIN_CHILD = "MinChild"
SIMPLEX_NONNEG = "SimplexNonneg"
SIMPLEX_SUM = "SimplexSum"
MAX_COMBO = "MaxCombo"
ROOT_NONNEG = "RootNonneg"


@dataclass(frozen=True)
class AuxVar:
    id: int
    kind: str          # "rho" or "lambda"
    node: int          # pre-order id of the originating tree node
    index: int = 0     # position inside the lambda vector


@dataclass(frozen=True)
class ReformConstraint:
    """One member of the constraint set. Operands are variable ids.

    LeafLower:      h(x_t) >= rho[node]
    MinChild:       rho[children[0]] >= rho[node]
    SimplexNonneg:  lam[lambdas] >= 0
    SimplexSum:     sum(lam[lambdas]) == 1
    MaxCombo:       sum_j lam[lambdas[j]] * rho[children[j]] >= rho[node]
    RootNonneg:     rho[node] >= 0
    """

    kind: str
    node: int
    children: tuple = ()
    lambdas: tuple = ()
    predicate: Optional[Predicate] = None
    t: Optional[int] = None

    def __str__(self):
        v = f"rho[{self.node}]"
        if self.kind == LEAF_LOWER:
            return f"{self.predicate.name}(x[{self.t}]) >= {v}"
        if self.kind == MIN_CHILD:
            return f"rho[{self.children[0]}] >= {v}"
        if self.kind == SIMPLEX_NONNEG:
            return f"lam[{self.lambdas[0]}..{self.lambdas[-1]}] >= 0"
        if self.kind == SIMPLEX_SUM:
            return f"sum lam[{self.lambdas[0]}..{self.lambdas[-1]}] == 1"
        if self.kind == MAX_COMBO:
            terms = " + ".join(f"lam[{l}]*rho[{c}]" for l, c in zip(self.lambdas, self.children))
            return f"{terms} >= {v}"
        return f"{v} >= 0"


@dataclass(frozen=True)
class Assignment:
    rho: np.ndarray
    lam: np.ndarray

    @property
    def root(self) -> float:
        return float(self.rho[0])


class Reformulation:
    """Constraint set with its auxiliary variable registries; ``root`` is rho var 0."""

    def __init__(self, tree: TreeNode):
        self.tree = tree
        self.compiled = CompiledTree(tree)
        ct = self.compiled
        self.rho_vars = []
        self.lambda_vars = []
        self.constraints = []
        # lambda offset of each max node, in traversal order
        self.lambda_start = {}
        self._traverse(0)
        self.constraints.append(ReformConstraint(ROOT_NONNEG, 0))
        self.root = self.rho_vars[0]
        self._build_arrays()

    def _traverse(self, v: int) -> int:
        ct = self.compiled
        self.rho_vars.append(AuxVar(v, "rho", v))
        kind = ct.kinds[v]
        kids = ct.children[v]
        if kind == LEAF:
            node = ct.nodes[v]
            self.constraints.append(ReformConstraint(LEAF_LOWER, v, predicate=node.predicate, t=node.t))
        elif kind == MIN:
            for u in kids:
                self._traverse(u)
                self.constraints.append(ReformConstraint(MIN_CHILD, v, children=(u,)))
        else:
            for u in kids:
                self._traverse(u)
            start = len(self.lambda_vars)
            self.lambda_start[v] = start
            for j in range(len(kids)):
                self.lambda_vars.append(AuxVar(start + j, "lambda", v, j))
            lams = tuple(range(start, start + len(kids)))
            self.constraints.append(ReformConstraint(SIMPLEX_NONNEG, v, lambdas=lams))
            self.constraints.append(ReformConstraint(SIMPLEX_SUM, v, lambdas=lams))
            self.constraints.append(ReformConstraint(MAX_COMBO, v, children=tuple(kids), lambdas=lams))
        return v

    def _build_arrays(self):
        ct = self.compiled
        self.n_rho = len(self.rho_vars)
        self.n_lambda = len(self.lambda_vars)
        mc = [(v, u) for v in range(ct.n_nodes) if ct.kinds[v] == MIN for u in ct.children[v]]
        self.min_parent = np.array([p for p, _ in mc], dtype=int)
        self.min_child = np.array([c for _, c in mc], dtype=int)
        maxes = sorted(self.lambda_start)
        self.max_nodes = np.array(maxes, dtype=int)
        self.max_starts = np.array([self.lambda_start[v] for v in maxes], dtype=int)
        # lambda j of max node v multiplies rho of child j
        self.max_child = np.array([u for v in maxes for u in ct.children[v]], dtype=int)
        self.max_lambda = np.array([self.lambda_start[v] + j for v in maxes
                                    for j in range(len(ct.children[v]))], dtype=int)
        self.max_seg = np.array([k for k, v in enumerate(maxes) for _ in ct.children[v]], dtype=int)
        order = np.argsort(self.max_lambda, kind="stable")
        assert np.array_equal(self.max_lambda[order], np.arange(self.n_lambda))

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def dump(self) -> str:
        return "\n".join(f"{c.kind:14s} {c}" for c in self.constraints)


def reformulate(root: TreeNode) -> Reformulation:
    return Reformulation(root)


def warm_start(r: Reformulation, x_ref) -> Assignment:
    """Node robustness on ``x_ref`` for every rho; argmax indicators (lowest index on ties) for lambda."""
    ct = r.compiled
    rho = ct.node_values(x_ref)
    lam = np.zeros(r.n_lambda)
    for v, start in r.lambda_start.items():
        vals = rho[ct.children[v]]
        lam[start + int(np.argmax(vals))] = 1.0
    return Assignment(rho, lam)


def uniform_assignment(r: Reformulation, x_ref) -> Assignment:
    """Tightest rho values for uniform lambda = 1/m at every max node."""
    lam = np.zeros(r.n_lambda)
    ct = r.compiled
    for v, start in r.lambda_start.items():
        m = len(ct.children[v])
        lam[start:start + m] = 1.0 / m
    return Assignment(propagate(r, x_ref, lam), lam)


def propagate(r: Reformulation, x, lam: np.ndarray) -> np.ndarray:
    """Largest rho values admitted by the constraints for fixed ``x`` and ``lam``."""
    ct = r.compiled
    states = _states(x)
    rho = np.empty(ct.n_nodes)
    rho[ct.leaf_ids] = ct.leaf_values(states)
    for g in ct.groups:
        a = rho[g.child_ids]
        if g.kind == MIN:
            rho[g.nodes] = np.minimum.reduceat(a, g.starts)
        else:
            ids = np.concatenate([np.arange(r.lambda_start[v], r.lambda_start[v] + len(ct.children[v]))
                                  for v in g.nodes])
            rho[g.nodes] = np.add.reduceat(lam[ids] * a, g.starts)
    return rho


def constraint_slacks(r: Reformulation, assignment: Assignment, x) -> dict:
    """Signed slack per constraint family (>= 0 satisfied; SimplexSum is a residual)."""
    ct = r.compiled
    states = _states(x)
    rho, lam = np.asarray(assignment.rho, dtype=float), np.asarray(assignment.lam, dtype=float)
    if rho.shape != (r.n_rho,) or lam.shape != (r.n_lambda,):
        raise ValueError(f"assignment needs {r.n_rho} rho and {r.n_lambda} lambda values, "
                         f"got {rho.shape} and {lam.shape}")
    if ct.max_time >= states.shape[1]:
        raise ValueError("trajectory is shorter than the tree's largest leaf time")
    out = {
        LEAF_LOWER: ct.leaf_values(states) - rho[ct.leaf_ids],
        MIN_CHILD: rho[r.min_child] - rho[r.min_parent],
        SIMPLEX_NONNEG: lam,
        ROOT_NONNEG: rho[:1],
    }
    if r.n_lambda:
        combo = np.add.reduceat(lam[r.max_lambda] * rho[r.max_child], _seg_starts(r.max_seg))
        out[SIMPLEX_SUM] = np.add.reduceat(lam[r.max_lambda], _seg_starts(r.max_seg)) - 1.0
        out[MAX_COMBO] = combo - rho[r.max_nodes]
    else:
        out[SIMPLEX_SUM] = np.zeros(0)
        out[MAX_COMBO] = np.zeros(0)
    return out


def _seg_starts(seg):
    return np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])


def check_feasible(r: Reformulation, assignment: Assignment, x, tol: float = 1e-9):
    """``(feasible, max_violation)`` of every constraint for (x, assignment)."""
    slack = constraint_slacks(r, assignment, x)
    worst = 0.0
    for kind, s in slack.items():
        if s.size == 0:
            continue
        v = np.abs(s).max() if kind == SIMPLEX_SUM else max(0.0, float(-s.min()))
        worst = max(worst, float(v))
    return worst <= tol, worst
