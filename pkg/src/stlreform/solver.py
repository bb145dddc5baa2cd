"""Augmented Lagrangian solver for :class:`NlpProblem`.

Outer loop: Powell-Hestenes-Rockafellar multipliers for equalities and
inequalities (no slacks), penalty growth on poor feasibility progress.
Inner loop: bound-constrained L-BFGS-B on the augmented Lagrangian.

Variable groups that the problem marks as simplices (the lambda weights of max
nodes) are optimised through ``lam = w / sum(w)`` with ``w >= 0`` inside each
inner solve, so they stay on their simplices. Without this the penalty can be
lowered by pulling every weight of a max node towards zero, which satisfies
the bilinear combination row trivially when all children are negative and
leaves the method stuck far from feasibility.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize

from .nlp import NlpProblem

log = logging.getLogger(__name__)

OPTIMAL, FEASIBLE, INFEASIBLE, MAX_ITER = "optimal", "feasible", "infeasible", "max_iter"


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 3000
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e9
    inner_tol0: float = 1e-2
    memory: int = 20
    stall_window: int = 2
    stall_tol: float = 1e-2       # relative violation decrease that still counts as progress
    stall_penalty: float = 1e5    # infeasibility is only declared once the penalty is this large
    settle_window: int = 3        # outer iterations that must stay feasible before settling
    settle_tol: float = 1e-4      # objective change over that window, relative to max(1, |f|)
    simplex_param: bool = True    # keep marked simplex groups feasible inside the inner solve
    timeout: float = 600.0


@dataclass
class SolveReport:
    status: str
    objective: float
    max_violation: float
    kkt_residual: float
    iterations: int
    inner_iterations: int
    wall_time: float
    x: np.ndarray = field(repr=False)
    penalty: float = 0.0
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)

    def to_dict(self, include_point: bool = False) -> dict:
        d = asdict(self)
        d.pop("x")
        if include_point:
            d["x"] = self.x.tolist()
        return d


class _Merit:
    """Augmented Lagrangian value and gradient for fixed multipliers and penalty."""

    def __init__(self, p: NlpProblem, y, w, mu):
        self.p, self.y, self.w, self.mu = p, y, w, mu
        self.evals = 0

    def __call__(self, z):
        p, y, w, mu = self.p, self.y, self.w, self.mu
        self.evals += 1
        val = p.f(z)
        grad = p.grad(z)
        if p.n_eq:
            c = p.c_eq(z)
            val += -y @ c + 0.5 * mu * (c @ c)
            grad = grad - p.eq_vjp(z, y - mu * c)
        if p.n_ineq:
            c = p.c_ineq(z)
            s = np.maximum(0.0, w - mu * c)
            val += (s @ s - w @ w) / (2.0 * mu)
            grad = grad - p.ineq_vjp(z, s)
        return val, grad


class _Simplex:
    """Map ``w -> z`` replacing each marked block by ``w_block / sum(w_block)``."""

    def __init__(self, index, block):
        self.index = np.asarray(index, dtype=int)
        self.block = np.asarray(block, dtype=int)
        self.n_blocks = int(self.block.max()) + 1 if self.block.size else 0

    def _sums(self, v):
        return np.bincount(self.block, weights=v, minlength=self.n_blocks)

    def to_z(self, w):
        z = w.copy()
        v = w[self.index]
        z[self.index] = v / self._sums(v)[self.block]
        return z

    def from_z(self, z):
        """Scale each block so its largest weight is one; empty blocks become uniform."""
        w = z.copy()
        v = np.maximum(z[self.index], 0.0)
        top = np.zeros(self.n_blocks)
        np.maximum.at(top, self.block, v)
        empty = top[self.block] <= 0
        w[self.index] = np.where(empty, 1.0, v / np.where(empty, 1.0, top[self.block]))
        return w

    def grad_w(self, w, gz):
        g = gz.copy()
        v = w[self.index]
        S = self._sums(v)[self.block]
        lam = v / S
        gl = gz[self.index]
        g[self.index] = (gl - self._sums(lam * gl)[self.block]) / S
        return g


def _measures(p: NlpProblem, z, y, w, lb, ub):
    """(violation, scaled KKT residual) at z for multipliers y, w."""
    g = p.grad(z)
    gl = g.copy()
    viol = 0.0
    compl = 0.0
    if p.n_eq:
        ce = p.c_eq(z)
        viol = max(viol, float(np.abs(ce).max()))
        gl -= p.eq_vjp(z, y)
    if p.n_ineq:
        ci = p.c_ineq(z)
        viol = max(viol, float(max(0.0, -ci.min())))
        gl -= p.ineq_vjp(z, w)
        compl = float(np.abs(np.minimum(w, np.maximum(ci, 0.0))).max())
    proj = np.clip(z - gl, lb, ub) - z
    scale = max(1.0, float(np.abs(g).max()) if g.size else 1.0)
    return viol, max(float(np.abs(proj).max()) / scale, compl)


def _stalled(history, opts: SolverOptions) -> bool:
    """The best violation of the last ``stall_window`` iterations barely improves on the earlier best."""
    W = opts.stall_window
    if len(history) <= W:
        return False
    before, recent = min(history[:-W]), min(history[-W:])
    return before - recent < opts.stall_tol * before


def _settled(history, objectives, opts: SolverOptions) -> bool:
    """Feasible for the last ``settle_window + 1`` outer iterations with a flat objective."""
    W = opts.settle_window
    if W <= 0 or len(history) <= W or max(history[-W - 1:]) > opts.feas_tol:
        return False
    f = objectives[-1]
    return abs(f - objectives[-W - 1]) <= opts.settle_tol * max(1.0, abs(f))


def solve(p: NlpProblem, init, opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Minimise ``p`` from ``init``. Deterministic for fixed (p, init, opts)."""
    start = time.perf_counter()
    lb, ub = p.vars.bounds()
    z = np.clip(np.asarray(init, dtype=float).copy(), lb, ub)
    if z.shape != (p.n_vars,):
        raise ValueError(f"initial point has shape {z.shape}, problem has {p.n_vars} variables")
    f0 = p.f(z)
    if not np.isfinite(f0) or not np.all(np.isfinite(p.c_eq(z))) or not np.all(np.isfinite(p.c_ineq(z))):
        raise ValueError("objective or constraints are not finite at the initial point")

    y = np.zeros(p.n_eq)
    w = np.zeros(p.n_ineq)
    mu = opts.penalty0
    inner_tol = opts.inner_tol0
    simplex = None
    if opts.simplex_param and p.simplices is not None and len(p.simplices[0]):
        simplex = _Simplex(*p.simplices)
        z = simplex.to_z(simplex.from_z(z))
        wlb, wub = lb.copy(), ub.copy()
        wlb[simplex.index], wub[simplex.index] = 0.0, np.inf
    else:
        wlb, wub = lb, ub
    bounds = list(zip(np.where(np.isfinite(wlb), wlb, None), np.where(np.isfinite(wub), wub, None)))

    history = []
    objectives = []
    prev_viol = np.inf
    inner_total = 0
    status, message = MAX_ITER, "outer iteration limit reached"
    viol, kkt = p.violation(z), np.inf
    it = 0
    for it in range(1, opts.max_outer + 1):
        merit = _Merit(p, y, w, mu)
        if simplex is None:
            fun, v0 = merit, z
        else:
            def fun(v, merit=merit):
                val, g = merit(simplex.to_z(v))
                return val, simplex.grad_w(v, g)
            v0 = simplex.from_z(z)
        res = minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": opts.max_inner, "maxfun": 2 * opts.max_inner,
                                "gtol": inner_tol, "ftol": 1e-15, "maxcor": opts.memory})
        inner_total += int(res.nit)
        z = res.x if simplex is None else simplex.to_z(res.x)
        if not np.isfinite(res.fun):
            status, message = MAX_ITER, "non-finite merit value"
            break
        # first-order multiplier update
        if p.n_eq:
            y = y - mu * p.c_eq(z)
        if p.n_ineq:
            w = np.maximum(0.0, w - mu * p.c_ineq(z))
        viol, kkt = _measures(p, z, y, w, lb, ub)
        history.append(viol)
        objectives.append(p.f(z))
        log.debug("outer %d: f=%.6g viol=%.3e kkt=%.3e mu=%.1e inner=%d",
                  it, p.f(z), viol, kkt, mu, res.nit)
        if viol <= opts.feas_tol and kkt <= opts.kkt_tol:
            status, message = OPTIMAL, "first-order conditions satisfied"
            break
        if _settled(history, objectives, opts):
            status, message = FEASIBLE, "feasible with a settled objective"
            break
        if viol > opts.feas_tol and viol > 0.25 * prev_viol:
            mu = min(mu * opts.penalty_growth, opts.penalty_max)
        prev_viol = viol
        inner_tol = max(0.1 * inner_tol, 0.1 * opts.kkt_tol)
        if viol > opts.feas_tol and mu >= opts.stall_penalty and _stalled(history, opts) \
                and min(history) > opts.feas_tol:
            status, message = INFEASIBLE, "constraint violation stalled"
            break
        if time.perf_counter() - start > opts.timeout:
            message = "time limit reached"
            break
    else:
        it = opts.max_outer
    if status == MAX_ITER:
        if viol <= opts.feas_tol:
            status = FEASIBLE
        elif _stalled(history, opts) and min(history) > opts.feas_tol:
            status = INFEASIBLE
    return SolveReport(status=status, objective=p.f(z), max_violation=p.violation(z),
                       kkt_residual=kkt, iterations=it, inner_iterations=inner_total,
                       wall_time=time.perf_counter() - start, x=z, penalty=mu, message=message)
