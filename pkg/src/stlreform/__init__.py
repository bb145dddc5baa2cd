"""STL trajectory optimisation with an exact smooth reformulation of the robustness max/min."""

__version__ = "0.1.0"

from .formula import (Always, And, Eventually, Interval, Not, Or, Pred, STLSyntaxError, Trajectory,
                      UnsupportedNegation, Until, eval_robustness, horizon, is_nnf, parse, to_nnf)
from .predicates import circle_predicate, halfplane_predicate
from .tree import build_tree, eval_tree, flatten, prepare_tree
from .smooth import error_lower_bounds, smooth_max, smooth_min, smooth_robustness
from .reformulation import check_feasible, reformulate, warm_start
from .dynamics import UnicycleDynamics, double_integrator, unicycle_step
from .assemble import Boxes, Weights, assemble, assemble_smooth
from .nlp import NlpProblem, fd_check
from .solver import SolveReport, SolverOptions, solve
from .scenarios import Scenario, builtin_scenario, load_scenario

__all__ = [
    "Always", "And", "Eventually", "Interval", "Not", "Or", "Pred", "STLSyntaxError", "Trajectory",
    "UnsupportedNegation", "Until", "eval_robustness", "horizon", "is_nnf", "parse", "to_nnf",
    "circle_predicate", "halfplane_predicate",
    "build_tree", "eval_tree", "flatten", "prepare_tree",
    "error_lower_bounds", "smooth_max", "smooth_min", "smooth_robustness",
    "check_feasible", "reformulate", "warm_start",
    "UnicycleDynamics", "double_integrator", "unicycle_step",
    "Boxes", "Weights", "assemble", "assemble_smooth",
    "NlpProblem", "fd_check", "SolveReport", "SolverOptions", "solve",
    "Scenario", "builtin_scenario", "load_scenario",
]
