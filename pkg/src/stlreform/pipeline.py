"""End-to-end solves of a scenario with the exact reformulation or the smooth baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assemble import assemble, assemble_smooth, original_objective
from .dynamics import rollout
from .formula import Trajectory, eval_robustness, to_nnf
from .reformulation import reformulate, uniform_assignment, warm_start
from .scenarios import Scenario
from .smooth import K_GRID
from .solver import SolverOptions, solve
from .tree import CompiledTree, prepare_tree

EXACT, SMOOTH = "exact", "smooth-approx"

# back-off on the robustness constraint, ten times the default feasibility tolerance
MARGIN = 1e-5


@dataclass
class Prepared:
    scenario: Scenario
    formula: object
    nnf: object
    tree: object
    compiled: CompiledTree

    @classmethod
    def of(cls, scenario: Scenario, simplify: bool = True, deduplicate: bool = True) -> "Prepared":
        f = scenario.formula
        nnf = to_nnf(f)
        tree = prepare_tree(nnf, scenario.T, simplify, deduplicate)
        return cls(scenario, f, nnf, tree, CompiledTree(tree))


@dataclass
class MethodResult:
    method: str
    status: str
    objective: float          # -alpha * discrete robustness + tracking cost
    nlp_objective: float
    robustness: float         # discrete robustness of the returned trajectory
    solve_time: float
    iterations: int
    max_violation: float
    trajectory: Trajectory = field(repr=False)
    k: Optional[float] = None
    grid: list = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        return self.status in ("optimal", "feasible")

    def to_dict(self) -> dict:
        d = {
            "method": self.method, "status": self.status, "objective": self.objective,
            "nlp_objective": self.nlp_objective, "robustness": self.robustness,
            "solve_time": self.solve_time, "iterations": self.iterations,
            "max_violation": self.max_violation,
        }
        if self.k is not None:
            d["k"] = self.k
        if self.grid:
            d["k_grid"] = self.grid
        return d


def zero_input_trajectory(scenario: Scenario) -> Trajectory:
    u = np.zeros((scenario.m, scenario.T + 1))
    return Trajectory(rollout(scenario.dynamics, scenario.x0, u), u)


def random_trajectory(scenario: Scenario, rng: np.random.Generator, scale: float = 1.0) -> Trajectory:
    """i.i.d. normal states and inputs; column 0 is pinned to x0."""
    X = scale * rng.standard_normal((scenario.n, scenario.T + 1))
    U = scale * rng.standard_normal((scenario.m, scenario.T + 1))
    X[:, 0] = scenario.x0
    return Trajectory(X, U)


@dataclass
class InitialGuess:
    """A trajectory plus how to initialise the auxiliaries from it."""

    trajectory: Trajectory
    lambdas: str = "witness"   # "witness": argmax indicators; "uniform": 1/m at every max node


def initial_trajectory(scenario: Scenario, init: str = "reference", seed: Optional[int] = None,
                       scale: float = 1.0) -> InitialGuess:
    """Reference or random trajectories carry witness auxiliaries; the zero-input
    fallback (no reference available) starts every lambda at 1/m."""
    if init == "reference":
        ref = scenario.reference_trajectory()
        if ref is not None:
            return InitialGuess(ref)
        return InitialGuess(zero_input_trajectory(scenario), "uniform")
    if init == "zero":
        return InitialGuess(zero_input_trajectory(scenario), "uniform")
    if init == "random":
        return InitialGuess(random_trajectory(scenario, np.random.default_rng(seed), scale))
    raise ValueError(f"unknown initialisation {init!r}")


def _guess(init) -> InitialGuess:
    return init if isinstance(init, InitialGuess) else InitialGuess(init)


def _result(method, prep: Prepared, report, traj, k=None) -> MethodResult:
    sc = prep.scenario
    rob = eval_robustness(prep.formula, traj)
    return MethodResult(method, report.status, original_objective(traj, rob, sc.weights), report.objective,
                        rob, report.wall_time, report.iterations, report.max_violation, traj, k)


def solve_exact(prep: Prepared, init, opts: SolverOptions = SolverOptions(),
                margin: float = MARGIN) -> MethodResult:
    sc = prep.scenario
    guess = _guess(init)
    reform = reformulate(prep.tree)
    p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, reform, margin)
    aux = uniform_assignment if guess.lambdas == "uniform" else warm_start
    z0 = p.layout.pack(guess.trajectory, aux(reform, guess.trajectory))
    report = solve(p, z0, opts)
    return _result(EXACT, prep, report, p.layout.trajectory(report.x))


def solve_smooth(prep: Prepared, init, k: Optional[float] = None,
                 opts: SolverOptions = SolverOptions(), margin: float = MARGIN) -> MethodResult:
    """Baseline with soft robustness; ``k=None`` grid-searches k and keeps the best result."""
    sc = prep.scenario
    if k is not None:
        p = assemble_smooth(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, prep.compiled, k, margin)
        report = solve(p, p.layout.pack(_guess(init).trajectory), opts)
        return _result(SMOOTH, prep, report, p.layout.trajectory(report.x), float(k))
    results = [solve_smooth(prep, init, kk, opts, margin) for kk in K_GRID]
    ok = [r for r in results if r.success and r.robustness >= 0]
    pool = ok or results
    best = min(pool, key=lambda r: (r.objective, r.k))
    best.grid = [{"k": r.k, "status": r.status, "objective": r.objective} for r in results]
    best.solve_time = sum(r.solve_time for r in results)
    return best


def run(prep: Prepared, method: str, init, k: Optional[float] = None,
        opts: SolverOptions = SolverOptions(), margin: float = MARGIN) -> list:
    methods = [EXACT, SMOOTH] if method == "both" else [method]
    out = []
    for m in methods:
        if m == EXACT:
            out.append(solve_exact(prep, init, opts, margin))
        elif m == SMOOTH:
            out.append(solve_smooth(prep, init, k if k is not None else prep.scenario.default_k(), opts, margin))
        else:
            raise ValueError(f"unknown method {m!r}")
    return out
