"""Randomised property suites behind ``stlreform check`` and the acceptance tests.

Every suite returns a :class:`SuiteResult`; none of them raises on a failed
property, so a caller can print one verdict line per suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assemble import assemble, assemble_smooth, original_objective
from .formula import (Always, And, Eventually, Interval, Not, Or, Pred, Trajectory, Until,
                      eval_robustness, horizon, to_nnf)
from .nlp import fd_check
from .predicates import circle_predicate, halfplane_predicate
from .reformulation import ROOT_NONNEG, constraint_slacks, reformulate, warm_start
from .scenarios import builtin_scenario, builtin_scenarios
from .smooth import K_GRID, error_lower_bounds, smooth_max, smooth_min, smooth_robustness
from .tree import MIN, build_tree, eval_tree, flatten, prepare_tree


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.detail} ({self.cases} cases, {self.elapsed:.2f} s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - start
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# random formulas and trajectories

def predicate_pool():
    """A few planar predicates and their negations, keyed by name."""
    base = [
        halfplane_predicate((1.0, 0.0), 0.3, name="p"),
        halfplane_predicate((0.6, -0.8), -0.2, name="q"),
        circle_predicate((0.5, -0.5), 1.2, name="c"),
        circle_predicate((-1.0, 0.5), 0.8, inside=False, name="o"),
    ]
    return base + [p.negate() for p in base]


def random_formula(rng: np.random.Generator, depth: int, budget: int, preds=None, nnf: bool = True):
    """Random formula with nesting depth <= ``depth`` and horizon <= ``budget``.

    With ``nnf=False`` negations may also appear above And/Or/Always/Eventually.
    """
    preds = predicate_pool() if preds is None else preds

    def interval():
        hi = int(rng.integers(0, min(budget, 6) + 1))
        return Interval(int(rng.integers(0, hi + 1)), hi), hi

    if depth <= 0 or rng.random() < 0.2:
        return Pred(preds[int(rng.integers(len(preds)))])
    op = rng.choice(["and", "or", "G", "F", "U", "not"] if not nnf else ["and", "or", "G", "F", "U"])
    if op in ("and", "or"):
        kids = [random_formula(rng, depth - 1, budget, preds, nnf) for _ in range(int(rng.integers(2, 4)))]
        return And(tuple(kids)) if op == "and" else Or(tuple(kids))
    if op == "not":
        child = random_formula(rng, depth - 1, budget, preds, nnf)
        return child if isinstance(child, (Until, Not)) or _has_until(child) else Not(child)
    iv, hi = interval()
    if op == "U":
        left = random_formula(rng, depth - 1, budget - hi, preds, nnf)
        right = random_formula(rng, depth - 1, budget - hi, preds, nnf)
        return Until(iv, left, right)
    child = random_formula(rng, depth - 1, budget - hi, preds, nnf)
    return Always(iv, child) if op == "G" else Eventually(iv, child)


def _has_until(f) -> bool:
    if isinstance(f, Until):
        return True
    if isinstance(f, (And, Or)):
        return any(_has_until(c) for c in f.children)
    if isinstance(f, (Always, Eventually, Not)):
        return _has_until(f.child)
    return False


def random_case(rng: np.random.Generator, max_depth: int = 4, max_T: int = 20):
    """(NNF formula, horizon T, planar trajectory of length T+1)."""
    T = int(rng.integers(0, max_T + 1))
    f = random_formula(rng, int(rng.integers(1, max_depth + 1)), T)
    x = 1.5 * rng.standard_normal((2, T + 1))
    return f, T, x


# suites

@_timed
def operator_equivalence_suite(n: int = 1000, n_lambda: int = 100, seed: int = 0) -> SuiteResult:
    """Max through an indicator witness, simplex combinations bounded by max, min through all entries."""
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(n):
        m = int(rng.integers(2, 9))
        a = rng.standard_normal(m)
        if rng.random() < 0.2:
            a[rng.integers(m)] = a[rng.integers(m)]       # ties
        # thresholds on both sides of max and min, and exactly at them
        for delta in (a.max(), a.min(), rng.uniform(a.min() - 1, a.max() + 1)):
            lam = np.zeros(m)
            lam[int(np.argmax(a))] = 1.0
            if (a.max() >= delta) != (lam @ a >= delta):
                bad.append(("max", i))
            if (a.min() >= delta) != bool(np.all(a >= delta)):
                bad.append(("min", i))
        L = rng.dirichlet(np.ones(m), size=n_lambda)
        if np.any(L @ a > a.max() + 1e-12):
            bad.append(("simplex", i))
    return SuiteResult("operator-equivalence", not bad, n,
                       "all equivalences hold" if not bad else f"{len(bad)} violations, first {bad[0]}")


@_timed
def lemma1_suite(n: int = 10000, seed: int = 0, smax: Callable = smooth_max,
                 smin: Callable = smooth_min, tol: float = 1e-12) -> SuiteResult:
    """Errors of the soft operators against their lower bounds.

    Entries are drawn from [-10, 10] with m in [2, 8] and k in {0.5, 1, 5, 25},
    with injected ties. The min error must be strictly positive whenever its
    lower bound is resolvable next to min(a) in double precision; below that
    the exact gap rounds away and only a non-negative error is required.
    ``smax`` and ``smin`` are injectable so the suite can be shown to catch a
    broken implementation.
    """
    rng = np.random.default_rng(seed)
    ks = (0.5, 1.0, 5.0, 25.0)
    worst_max = worst_min = worst_eq = 0.0
    nonpos = 0
    for _ in range(n):
        m = int(rng.integers(2, 9))
        a = rng.uniform(-10.0, 10.0, m)
        if rng.random() < 0.2:
            a[int(rng.integers(m))] = a.max()
        if rng.random() < 0.1:
            a[int(rng.integers(m))] = a.min()
        k = ks[int(rng.integers(len(ks)))]
        d_max = a.max() - smax(a, k)
        d_min = a.min() - smin(a, k)
        lb_max, lb_min = error_lower_bounds(a, k)
        worst_max = max(worst_max, lb_max - d_max)
        worst_min = max(worst_min, lb_min - d_min)
        resolvable = lb_min > 4.0 * np.spacing(abs(a.min()))
        if d_min < 0 or (resolvable and not d_min > 0):
            nonpos += 1
        if m == 2:
            worst_eq = max(worst_eq, abs(lb_max - d_max), abs(lb_min - d_min))
    ok = worst_max <= tol and worst_min <= tol and nonpos == 0 and worst_eq <= tol
    detail = (f"max bound gap {worst_max:.2e}, min bound gap {worst_min:.2e}, "
              f"m=2 mismatch {worst_eq:.2e}, non-positive min errors {nonpos}")
    return SuiteResult("lemma1-bound", ok, n, detail)


@_timed
def soundness_suite(n: int = 1000, seed: int = 0, tol: float = 1e-12) -> SuiteResult:
    """Soft robustness never exceeds the discrete tree value."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n):
        f, T, x = random_case(rng)
        root = prepare_tree(f, T) if rng.random() < 0.5 else build_tree(f, 0, T)
        k = float(rng.choice(K_GRID)) * float(rng.uniform(0.5, 2.0))
        worst = max(worst, smooth_robustness(root, x, k) - eval_tree(root, x))
    return SuiteResult("soundness", worst <= tol, n, f"largest soft - exact {worst:.2e}")


@_timed
def tree_oracle_suite(n: int = 500, seed: int = 0) -> SuiteResult:
    """Tree evaluation equals the recursive semantics; flattening keeps the value."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        f, T, x = random_case(rng)
        root = build_tree(f, 0, T)
        ref = eval_robustness(f, x)
        if eval_tree(root, x) != ref or eval_tree(flatten(root), x) != ref \
                or eval_tree(prepare_tree(f, T), x) != ref:
            bad += 1
    return SuiteResult("tree-oracle", bad == 0, n, f"{bad} mismatches")


def _random_feasible_rho(r, states, lam, slack):
    """Batched bottom-up rho with non-negative slack below each constraint bound."""
    ct = r.compiled
    B = lam.shape[0]
    rho = np.empty((B, ct.n_nodes))
    rho[:, ct.leaf_ids] = ct.leaf_values(states)[None, :] - slack[:, ct.leaf_ids]
    for g in ct.groups:
        a = rho[:, g.child_ids]
        if g.kind == MIN:
            bound = np.minimum.reduceat(a, g.starts, axis=1)
        else:
            ids = np.concatenate([np.arange(r.lambda_start[v], r.lambda_start[v] + len(ct.children[v]))
                                  for v in g.nodes])
            bound = np.add.reduceat(lam[:, ids] * a, g.starts, axis=1)
        rho[:, g.nodes] = bound - slack[:, g.nodes]
    return rho


@_timed
def witness_suite(n: int = 500, n_assign: int = 100, seed: int = 0, tol: float = 1e-12) -> SuiteResult:
    """The warm-start witness is feasible with root value equal to the tree value;
    no feasible assignment certifies more than the tree value."""
    rng = np.random.default_rng(seed)
    worst_viol = 0.0
    worst_gap = -np.inf
    root_mismatch = 0
    for _ in range(n):
        f, T, x = random_case(rng)
        r = reformulate(prepare_tree(f, T))
        truth = eval_tree(r.tree, x)
        a = warm_start(r, x)
        if a.root != truth:
            root_mismatch += 1
        for kind, s in constraint_slacks(r, a, x).items():
            if s.size == 0 or (kind == ROOT_NONNEG and truth < 0):
                continue  # the root bound only applies when x satisfies the formula
            v = np.abs(s).max() if kind == "simplex_sum" else max(0.0, -float(s.min()))
            worst_viol = max(worst_viol, float(v))
        # random feasible points: Dirichlet lambda per max node, random slack
        lam = np.zeros((n_assign, r.n_lambda))
        for v, start in r.lambda_start.items():
            m = len(r.compiled.children[v])
            lam[:, start:start + m] = rng.dirichlet(np.ones(m), size=n_assign)
        slack = rng.exponential(0.1, (n_assign, r.n_rho)) * (rng.random((n_assign, 1)) < 0.5)
        rho = _random_feasible_rho(r, x, lam, slack)
        worst_gap = max(worst_gap, float((rho[:, 0] - truth).max()))
    ok = worst_viol <= tol and root_mismatch == 0 and worst_gap <= 1e-9
    detail = (f"witness violation {worst_viol:.2e}, root mismatches {root_mismatch}, "
              f"largest feasible root - tree value {worst_gap:.2e}")
    return SuiteResult("warm-start-witness", ok, n, detail)


def _random_point(rng: np.random.Generator, lb, ub) -> np.ndarray:
    """Normal sample pulled inside the bounds; one-sided bounds get a uniform offset."""
    z = np.clip(rng.normal(0.0, 2.0, lb.shape), lb, ub)
    low = np.isfinite(lb) & ~np.isfinite(ub)
    z[low] = lb[low] + rng.uniform(0.0, 1.0, int(low.sum()))
    high = np.isfinite(ub) & ~np.isfinite(lb)
    z[high] = ub[high] - rng.uniform(0.0, 1.0, int(high.sum()))
    return z


@_timed
def gradient_suite(points: int = 20, seed: int = 0, tol: float = 1e-5, scenarios=None,
                   k: Optional[float] = None) -> SuiteResult:
    """Finite-difference check of every assembled block of the given (default: builtin) scenarios."""
    rng = np.random.default_rng(seed)
    scenarios = builtin_scenarios() if scenarios is None else scenarios
    worst, where = 0.0, ""
    count = 0
    for sc in scenarios:
        root = prepare_tree(to_nnf(sc.formula), sc.T)
        kk = k if k is not None else (sc.default_k() or 25.0)
        problems = [assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, reformulate(root)),
                    assemble_smooth(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, root, kk)]
        for p in problems:
            lb, ub = p.vars.bounds()
            for _ in range(points):
                z = _random_point(rng, lb, ub)
                for fn in p.functions():
                    e = fd_check(fn, z)
                    count += 1
                    if e > worst:
                        worst, where = e, f"{sc.name}/{p.meta['method']}/{fn.name}"
    return SuiteResult("gradients", worst <= tol, count, f"max relative error {worst:.2e} at {where or '-'}")


@_timed
def objective_equivalence_suite(n: int = 100, seed: int = 0, scenario=None) -> SuiteResult:
    """At the warm-start witness the NLP objective equals ``-alpha*rho + tracking cost``.

    Trajectories are drawn on a dyadic grid so that every product and partial
    sum is exact and the comparison can be bitwise, independent of summation
    order.
    """
    rng = np.random.default_rng(seed)
    sc = scenario or builtin_scenario("two-target")
    root = prepare_tree(to_nnf(sc.formula), sc.T)
    r = reformulate(root)
    p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, r)
    bad = 0
    for _ in range(n):
        X = np.round(rng.uniform(0.0, 10.0, (sc.n, sc.T + 1)) * 64) / 64
        U = np.round(rng.standard_normal((sc.m, sc.T + 1)) * 64) / 64
        traj = Trajectory(X, U)
        z = p.layout.pack(traj, warm_start(r, traj))
        rob = eval_robustness(sc.formula, traj)
        expected = -sc.weights.alpha * rob + _loop_tracking(traj, sc.weights)
        if p.f(z) != expected or original_objective(traj, rob, sc.weights) != expected:
            bad += 1
    return SuiteResult("objective-equivalence", bad == 0, n, f"{bad} mismatches")


def _loop_tracking(traj: Trajectory, weights) -> float:
    total = 0.0
    for t in range(traj.T + 1):
        x, u = traj.states[:, t], traj.inputs[:, t]
        total += float(x @ weights.Q @ x) + float(u @ weights.R @ u)
    return total


SUITES = {
    "operator-equivalence": operator_equivalence_suite,
    "lemma1-bound": lemma1_suite,
    "soundness": soundness_suite,
    "tree-oracle": tree_oracle_suite,
    "warm-start-witness": witness_suite,
    "gradients": gradient_suite,
    "objective-equivalence": objective_equivalence_suite,
}


def run_all(seed: int = 0, names=None) -> list:
    names = list(SUITES) if names is None else names
    return [SUITES[name](seed=seed) for name in names]
