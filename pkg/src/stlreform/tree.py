"""Robustness trees: min/max internal nodes over predicate-at-time leaves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .formula import (Always, And, Eventually, Formula, Not, Or, Pred, Trajectory,
                      Until, horizon, is_nnf, _states)
from .predicates import CirclePredicate, HalfplanePredicate, Predicate

LEAF, MIN, MAX = "leaf", "min", "max"


@dataclass(frozen=True)
class TreeNode:
    kind: str
    children: tuple = ()
    predicate: Optional[Predicate] = None
    t: Optional[int] = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if self.kind == LEAF:
            if self.children or self.predicate is None or self.t is None:
                raise ValueError("a leaf carries a predicate and a time and has no children")
        elif self.kind in (MIN, MAX):
            if not self.children:
                raise ValueError("internal nodes need at least one child")
        else:
            raise ValueError(f"unknown node kind {self.kind!r}")

    @property
    def is_leaf(self) -> bool:
        return self.kind == LEAF

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf({self.predicate.name},{self.t})"
        name = "MinNode" if self.kind == MIN else "MaxNode"
        return f"{name}[{', '.join(map(repr, self.children))}]"


def leaf(predicate: Predicate, t: int, label: str = "") -> TreeNode:
    return TreeNode(LEAF, (), predicate, int(t), label or f"({predicate.name}, {t})")


def min_node(children, label: str = "") -> TreeNode:
    return TreeNode(MIN, tuple(children), label=label)


def max_node(children, label: str = "") -> TreeNode:
    return TreeNode(MAX, tuple(children), label=label)


def build_tree(f: Formula, t: int = 0, T: Optional[int] = None) -> TreeNode:
    """Expand an NNF formula at time ``t`` into its robustness tree."""
    if not is_nnf(f):
        raise ValueError("build_tree expects a formula in negation normal form")
    if T is not None and t + horizon(f) > T:
        raise ValueError(f"formula horizon {horizon(f)} from t={t} exceeds T={T}")
    return _build(f, t)


def _build(f: Formula, t: int) -> TreeNode:
    label = f"({f}, {t})"
    if isinstance(f, Pred):
        return leaf(f.predicate, t, label)
    if isinstance(f, And):
        return min_node([_build(c, t) for c in f.children], label)
    if isinstance(f, Or):
        return max_node([_build(c, t) for c in f.children], label)
    if isinstance(f, Always):
        return min_node([_build(f.child, t + s) for s in f.interval], label)
    if isinstance(f, Eventually):
        return max_node([_build(f.child, t + s) for s in f.interval], label)
    if isinstance(f, Until):
        left = [_build(f.left, t + j) for j in range(f.interval.hi)]
        branches = []
        for s in f.interval:
            kids = left[:s] + [_build(f.right, t + s)]
            branches.append(min_node(kids, f"({f}, {t}) branch t'={s}"))
        return max_node(branches, label)
    if isinstance(f, Not):
        raise ValueError("build_tree expects a formula in negation normal form")
    raise TypeError(f"not a formula: {f!r}")


def flatten(root: TreeNode) -> TreeNode:
    """Merge same-type parent/child internal nodes and collapse single-child nodes."""
    if root.is_leaf:
        return root
    kids = []
    for c in root.children:
        c = flatten(c)
        if c.kind == root.kind:
            kids.extend(c.children)
        else:
            kids.append(c)
    if len(kids) == 1:
        return kids[0]
    return TreeNode(root.kind, tuple(kids), label=root.label)


def dedup(root: TreeNode) -> TreeNode:
    """Drop repeated (predicate, t) leaves among the children of each internal node."""
    if root.is_leaf:
        return root
    kids, seen = [], set()
    for c in root.children:
        c = dedup(c)
        if c.is_leaf:
            key = (c.predicate.name, c.t)
            if key in seen:
                continue
            seen.add(key)
        kids.append(c)
    if len(kids) == 1:
        return kids[0]
    return TreeNode(root.kind, tuple(kids), label=root.label)


def prepare_tree(f: Formula, T: Optional[int] = None, simplify: bool = True,
                 deduplicate: bool = True) -> TreeNode:
    """Tree at t=0, flattened and deduplicated by default."""
    root = build_tree(f, 0, T)
    if simplify:
        root = flatten(root)
        if deduplicate:
            root = flatten(dedup(root))
    return root


def eval_tree(root: TreeNode, x) -> float:
    states = _states(x)
    return _eval(root, states)


def _eval(node: TreeNode, states) -> float:
    if node.is_leaf:
        return float(node.predicate.value(states[:, node.t]))
    vals = [_eval(c, states) for c in node.children]
    return min(vals) if node.kind == MIN else max(vals)


def iter_nodes(root: TreeNode):
    """Pre-order (depth-first, children left to right)."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def count_nodes(root: TreeNode) -> int:
    return sum(1 for _ in iter_nodes(root))


def max_time(root: TreeNode) -> int:
    return max(n.t for n in iter_nodes(root) if n.is_leaf)


def dump_tree(root: TreeNode, indent: str = "  ") -> str:
    lines = []

    def walk(node, depth):
        pad = indent * depth
        if node.is_leaf:
            lines.append(f"{pad}leaf {node.predicate.name} t={node.t}")
        else:
            lines.append(f"{pad}{node.kind} ({len(node.children)}) {node.label}".rstrip())
            for c in node.children:
                walk(c, depth + 1)

    walk(root, 0)
    return "\n".join(lines)


@dataclass
class _Group:
    kind: str
    nodes: np.ndarray        # parent ids in this group
    child_ids: np.ndarray    # concatenated children of all parents
    starts: np.ndarray       # segment offsets into child_ids
    seg: np.ndarray          # parent position (within group) for every child entry


class CompiledTree:
    """Array form of a tree for vectorized evaluation.

    Node ids follow the pre-order of ``iter_nodes``; internal nodes are grouped by
    height so every group only depends on lower groups.
    """

    def __init__(self, root: TreeNode):
        # subtrees may be shared objects; every occurrence gets its own id
        nodes, kids = [], []

        def visit(node):
            i = len(nodes)
            nodes.append(node)
            kids.append(None)
            kids[i] = [visit(c) for c in node.children]
            return i

        visit(root)
        self.root = root
        self.nodes = nodes
        self.n_nodes = len(nodes)
        self.kinds = [n.kind for n in nodes]
        self.children = kids

        preds, pred_index = [], {}
        leaf_ids, leaf_pred, leaf_t = [], [], []
        for i, n in enumerate(nodes):
            if n.is_leaf:
                key = n.predicate.name
                if key not in pred_index:
                    pred_index[key] = len(preds)
                    preds.append(n.predicate)
                leaf_ids.append(i)
                leaf_pred.append(pred_index[key])
                leaf_t.append(n.t)
        self.predicates = preds
        self.leaf_ids = np.array(leaf_ids, dtype=int)
        self.leaf_pred = np.array(leaf_pred, dtype=int)
        self.leaf_t = np.array(leaf_t, dtype=int)
        self.max_time = int(self.leaf_t.max())
        self._kernels = _leaf_kernels(preds, self.leaf_pred)

        height = np.zeros(self.n_nodes, dtype=int)
        for i in reversed(range(self.n_nodes)):
            if self.children[i]:
                height[i] = 1 + max(height[c] for c in self.children[i])
        self.groups = []
        for h in range(1, int(height.max()) + 1 if self.n_nodes else 1):
            for kind in (MIN, MAX):
                parents = [i for i in range(self.n_nodes) if height[i] == h and self.kinds[i] == kind]
                if not parents:
                    continue
                child_ids, starts, seg = [], [], []
                for k, p in enumerate(parents):
                    starts.append(len(child_ids))
                    child_ids.extend(self.children[p])
                    seg.extend([k] * len(self.children[p]))
                self.groups.append(_Group(kind, np.array(parents), np.array(child_ids),
                                          np.array(starts), np.array(seg)))

    def leaf_values(self, states: np.ndarray) -> np.ndarray:
        out = np.empty(len(self.leaf_ids))
        for k in self._kernels:
            out[k.sel] = k.value(states, self.leaf_t[k.sel])
        return out

    def leaf_gradients(self, states: np.ndarray) -> np.ndarray:
        """(n, n_leaves) gradients of each leaf predicate at its time step."""
        out = np.zeros((states.shape[0], len(self.leaf_ids)))
        for k in self._kernels:
            k.gradient(states, self.leaf_t[k.sel], out, k.sel)
        return out

    def node_values(self, x) -> np.ndarray:
        """Exact robustness of every node on trajectory ``x``."""
        states = _states(x)
        vals = np.empty(self.n_nodes)
        vals[self.leaf_ids] = self.leaf_values(states)
        for g in self.groups:
            reduce = np.minimum if g.kind == MIN else np.maximum
            vals[g.nodes] = reduce.reduceat(vals[g.child_ids], g.starts)
        return vals

    def value(self, x) -> float:
        return float(self.node_values(x)[0])


class _CircleKernel:
    """All circle leaves of one dimension: ``sign * (r*r - sum_j (x[i_j] - c_j)^2)``."""

    def __init__(self, sel, preds):
        self.sel = sel
        self.idx = np.array([p.indices for p in preds], dtype=int).T        # (d, L)
        self.c = np.array([p.center for p in preds], dtype=float).T
        self.r2 = np.array([p.radius * p.radius for p in preds])
        self.sign = np.array([1.0 if p.inside else -1.0 for p in preds])

    def value(self, states, t):
        sq = None
        for i, c in zip(self.idx, self.c):
            d = states[i, t] - c
            sq = d * d if sq is None else sq + d * d
        return self.sign * (self.r2 - sq)

    def gradient(self, states, t, out, sel):
        cols = np.flatnonzero(sel)
        for i, c in zip(self.idx, self.c):
            out[i, cols] = -2.0 * self.sign * (states[i, t] - c)


class _HalfplaneKernel:
    """All halfplane leaves of one dimension: ``sum_j a_j x[i_j] - offset``."""

    def __init__(self, sel, preds):
        self.sel = sel
        self.idx = np.array([p.indices for p in preds], dtype=int).T
        self.a = np.array([p.normal for p in preds], dtype=float).T
        self.off = np.array([p.offset for p in preds])

    def value(self, states, t):
        acc = None
        for i, a in zip(self.idx, self.a):
            acc = a * states[i, t] if acc is None else acc + a * states[i, t]
        return acc - self.off

    def gradient(self, states, t, out, sel):
        cols = np.flatnonzero(sel)
        for i, a in zip(self.idx, self.a):
            out[i, cols] = a


class _GenericKernel:
    def __init__(self, sel, pred):
        self.sel, self.pred = sel, pred

    def value(self, states, t):
        return self.pred.value(states[:, t])

    def gradient(self, states, t, out, sel):
        out[:, sel] = self.pred.gradient(states[:, t])


def _leaf_kernels(preds, leaf_pred):
    """Batch the leaves of circle and halfplane predicates; anything else is evaluated per predicate."""
    kernels, batches = [], {}
    for p, pred in enumerate(preds):
        if isinstance(pred, (CirclePredicate, HalfplanePredicate)) and len(set(pred.indices)) == len(pred.indices):
            batches.setdefault((type(pred), len(pred.indices)), []).append(p)
        else:
            kernels.append(_GenericKernel(leaf_pred == p, pred))
    for (cls, _), members in batches.items():
        sel = np.isin(leaf_pred, members)
        per_leaf = [preds[q] for q in leaf_pred[sel]]
        kernels.append((_CircleKernel if cls is CirclePredicate else _HalfplaneKernel)(sel, per_leaf))
    return kernels
