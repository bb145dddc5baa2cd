"""Smooth under-approximations of max/min and their error lower bounds.

The soft maximum is the Boltzmann-weighted mean ``sum a_i e^{k a_i} / sum e^{k a_i}``,
the soft minimum is ``-(1/k) log sum e^{-k a_i}``. Both shift exponents by the
relevant extremum before exponentiating, so large ``k`` cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formula import _states
from .tree import MAX, MIN, CompiledTree, TreeNode

K_GRID = (1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0)


@dataclass(frozen=True)
class SmoothParams:
    k: float = 25.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")


def _check(a, k):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty vector")
    if not k > 0:
        raise ValueError("k must be positive")
    return a


def smooth_max(a, k: float) -> float:
    a = _check(a, k)
    w = np.exp(k * (a - a.max()))
    return float(np.dot(w, a) / w.sum())


def smooth_min(a, k: float) -> float:
    a = _check(a, k)
    i = int(np.argmin(a))
    lo = a[i]
    # one minimiser contributes exp(0) = 1; log1p keeps small gaps accurate
    rest = np.exp(-k * (np.delete(a, i) - lo)).sum()
    return float(lo - np.log1p(rest) / k)


def error_lower_bounds(a, k: float) -> tuple:
    """Lower bounds ``(lb_max, lb_min)`` on ``max(a) - smooth_max(a)`` and ``min(a) - smooth_min(a)``."""
    a = _check(a, k)
    if a.size < 2:
        raise ValueError("error bounds need at least two entries")
    a = np.sort(a)[::-1]
    m = a.size
    r = int(np.sum(a == a[0]))
    s = int(np.sum(a == a[-1]))
    e = np.exp(k * (a - a[0]))
    w = e / e.sum()
    lb_max = 0.0 if r == m else float((a[0] - a[r]) * w[r:].sum())
    lb_min = float(np.log(s + np.exp(-k * (a[: m - s] - a[-1])).sum()) / k)
    return lb_max, lb_min


def smooth_robustness(root: TreeNode, x, k: float) -> float:
    """Tree value with smooth_max/smooth_min in place of max/min."""
    states = _states(x)

    def walk(node):
        if node.is_leaf:
            return float(node.predicate.value(states[:, node.t]))
        vals = [walk(c) for c in node.children]
        return smooth_min(vals, k) if node.kind == MIN else smooth_max(vals, k)

    return walk(root)


def _segment_smooth(kind, a, starts, seg, k):
    """Segment-wise soft min/max; returns values and d(out)/d(a) per entry."""
    if kind == MIN:
        lo = np.minimum.reduceat(a, starts)
        e = np.exp(-k * (a - lo[seg]))
        S = np.add.reduceat(e, starts)
        out = lo - np.log(S) / k
        return out, e / S[seg]
    hi = np.maximum.reduceat(a, starts)
    e = np.exp(k * (a - hi[seg]))
    S = np.add.reduceat(e, starts)
    w = e / S[seg]
    out = np.add.reduceat(w * a, starts)
    return out, w * (1.0 + k * (a - out[seg]))


def compiled_smooth(ct: CompiledTree, states: np.ndarray, k: float, gradient: bool = False):
    """Soft robustness of a compiled tree; optionally its gradient w.r.t. states."""
    vals = np.empty(ct.n_nodes)
    vals[ct.leaf_ids] = ct.leaf_values(states)
    local = []
    for g in ct.groups:
        out, d = _segment_smooth(g.kind, vals[g.child_ids], g.starts, g.seg, k)
        vals[g.nodes] = out
        local.append(d)
    if not gradient:
        return float(vals[0])
    adj = np.zeros(ct.n_nodes)
    adj[0] = 1.0
    for g, d in zip(reversed(ct.groups), reversed(local)):
        adj[g.child_ids] = adj[g.nodes][g.seg] * d
    leaf_adj = adj[ct.leaf_ids]
    grads = ct.leaf_gradients(states) * leaf_adj
    grad = np.zeros_like(states)
    for i in range(states.shape[0]):
        grad[i] = np.bincount(ct.leaf_t, weights=grads[i], minlength=states.shape[1])
    return float(vals[0]), grad
