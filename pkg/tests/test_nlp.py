import numpy as np
import pytest
import scipy.sparse as sp

from stlreform.assemble import (Boxes, DynamicsFunction, Layout, Weights, assemble, assemble_smooth,
                                original_objective, tracking_cost)
from stlreform.checks import _random_point
from stlreform.dynamics import UnicycleDynamics, double_integrator
from stlreform.formula import Trajectory, eval_robustness, parse, to_nnf
from stlreform.nlp import (DiffFunction, LinearFunction, NlpProblem, QuadraticFunction, VarSpace,
                           fd_check)
from stlreform.pipeline import Prepared, solve_exact
from stlreform.predicates import circle_predicate, halfplane_predicate
from stlreform.reformulation import reformulate, warm_start
from stlreform.scenarios import Scenario, builtin_scenario, builtin_scenarios, waypoint_trajectory
from stlreform.solver import SolverOptions, solve
from stlreform.tree import CompiledTree, leaf, prepare_tree

DI_WEIGHTS = Weights(1.0, np.diag([0.0, 0.0, 1.0, 1.0]), np.eye(2))


def small_problem(objective_H, objective_g, eqs=(), ineqs=()):
    vs = VarSpace()
    vs.add("x", len(objective_g))
    return NlpProblem(vs, QuadraticFunction("objective", objective_H, objective_g), list(eqs), list(ineqs))


# solver

def test_solver_bound_by_inequality():
    p = small_problem(np.eye(1), [0.0], ineqs=[LinearFunction("x>=1", np.eye(1), [-1.0])])
    rep = solve(p, [5.0])
    assert rep.success
    assert rep.x[0] == pytest.approx(1.0, abs=1e-6)
    assert rep.objective == pytest.approx(1.0, abs=1e-5)
    assert rep.max_violation <= 1e-6


def test_solver_equality_constrained_quadratic():
    # (x-2)^2 + (y+1)^2 = x^2 + y^2 - 4x + 2y + 5
    eq = LinearFunction("x+y=0", np.array([[1.0, 1.0]]))
    p = small_problem(np.eye(2), [-4.0, 2.0], eqs=[eq])
    rep = solve(p, [0.0, 0.0])
    assert rep.status == "optimal"
    assert rep.x == pytest.approx([1.5, -1.5], abs=1e-6)


def test_solver_respects_variable_bounds():
    vs = VarSpace()
    vs.add("x", 2, lb=[0.5, -np.inf], ub=[np.inf, -2.0])
    p = NlpProblem(vs, QuadraticFunction("objective", np.eye(2), [0.0, 0.0]), [], [])
    rep = solve(p, [3.0, 3.0])
    assert rep.x == pytest.approx([0.5, -2.0], abs=1e-8)


def test_solver_rejects_bad_initial_points():
    p = small_problem(np.eye(1), [0.0])
    with pytest.raises(ValueError):
        solve(p, [1.0, 2.0])

    class Nan(DiffFunction):
        def __init__(self):
            super().__init__("nan", 1, 1, [0], [0])

        def value(self, z):
            return np.array([np.nan])

        def jac_values(self, z):
            return np.array([0.0])

    vs = VarSpace()
    vs.add("x", 1)
    with pytest.raises(ValueError, match="finite"):
        solve(NlpProblem(vs, QuadraticFunction("objective", np.eye(1), [0.0]), [], [Nan()]), [0.0])


def test_solver_reports_infeasible_problems():
    # x >= 1 and x <= -1 cannot both hold
    ineqs = [LinearFunction("a", np.eye(1), [-1.0]), LinearFunction("b", -np.eye(1), [-1.0])]
    p = small_problem(np.eye(1), [0.0], ineqs=ineqs)
    rep = solve(p, [0.0], SolverOptions(max_outer=30))
    assert rep.status == "infeasible"
    assert not rep.success and rep.max_violation > 1e-6


def test_problem_validates_function_sizes():
    vs = VarSpace()
    vs.add("x", 2)
    with pytest.raises(ValueError):
        NlpProblem(vs, QuadraticFunction("objective", np.eye(3), np.zeros(3)), [], [])


# derivatives

def test_fd_check_linear_is_exact():
    rng = np.random.default_rng(0)
    A = sp.random(6, 10, density=0.4, random_state=1)
    f = LinearFunction("lin", A, rng.standard_normal(6))
    assert fd_check(f, rng.standard_normal(10)) <= 1e-10


def test_fd_check_detects_a_wrong_jacobian():
    class Wrong(DiffFunction):
        def __init__(self):
            super().__init__("wrong", 1, 2, [0, 0], [0, 1])

        def value(self, z):
            return np.array([z[0] ** 2 + 3 * z[1]])

        def jac_values(self, z):
            return np.array([z[0], 3.0])       # should be 2 z[0]

    assert fd_check(Wrong(), np.array([1.0, 0.0])) > 0.1


def test_fd_check_detects_a_missing_pattern_entry():
    class Partial(DiffFunction):
        def __init__(self):
            super().__init__("partial", 1, 2, [0], [0])

        def value(self, z):
            return np.array([z[0] + z[1]])

        def jac_values(self, z):
            return np.array([1.0])

    assert fd_check(Partial(), np.zeros(2)) > 0.1


def test_fd_check_smooth_robustness_k25():
    rng = np.random.default_rng(1)
    sc = builtin_scenario("nonlinear")
    ct = CompiledTree(prepare_tree(to_nnf(sc.formula), sc.T))
    p = assemble_smooth(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, ct, 25.0)
    smooth = p.ineq_constraints[0]
    lb, ub = p.vars.bounds()
    for _ in range(3):
        assert fd_check(smooth, _random_point(rng, lb, ub)) <= 1e-5


def test_fd_check_unicycle_dynamics():
    rng = np.random.default_rng(2)
    T = 6
    layout = Layout(3, 2, T)
    f = DynamicsFunction(UnicycleDynamics(0.5), layout, layout.size)
    for _ in range(10):
        assert fd_check(f, rng.standard_normal(layout.size)) <= 1e-6


def test_linear_dynamics_have_zero_curvature():
    rng = np.random.default_rng(3)
    sc = builtin_scenario("two-target")
    r = reformulate(prepare_tree(to_nnf(sc.formula), sc.T))
    p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, r)
    dyn = next(f for f in p.eq_constraints if f.name == "dynamics")
    z = rng.standard_normal(p.n_vars)
    for _ in range(5):
        d = rng.standard_normal(p.n_vars) * 1e-3
        second = dyn.value(z + d) - 2 * dyn.value(z) + dyn.value(z - d)
        assert np.abs(second).max() <= 1e-8


# assembly

def _leaf_problem(T=1):
    mu = halfplane_predicate((1.0, 0.0), 0.5, name="mu")
    r = reformulate(leaf(mu, T))
    return assemble(double_integrator(), [0.0, 0.0, 1.0, 0.0], T, DI_WEIGHTS, Boxes.make(4, 2), r), r


def test_assemble_single_leaf_counts():
    p, _ = _leaf_problem()
    assert p.n_vars == 8 + 4 + 1
    assert {f.name: f.size for f in p.eq_constraints} == {"dynamics": 4, "initial_state": 4}
    assert {f.name: f.size for f in p.ineq_constraints} == {"leaf_lower": 1, "root_nonneg": 1}


def test_assemble_degenerate_horizon():
    w = Weights(1.0, np.zeros((4, 4)), np.zeros((2, 2)))
    p = assemble(double_integrator(), np.zeros(4), 0, w, Boxes.make(4, 2), None)
    assert [f.name for f in p.eq_constraints] == ["initial_state"]
    assert p.n_ineq == 0 and p.n_vars == 6


def test_assemble_nonlinear_case():
    sc = builtin_scenario("nonlinear")
    assert (sc.n, sc.m, sc.T) == (3, 2, 50)
    assert sc.weights.alpha == 10.0
    assert np.array_equal(sc.weights.Q, np.zeros((3, 3)))
    assert np.array_equal(sc.weights.R, np.diag([0.1, 1.0]))
    r = reformulate(prepare_tree(to_nnf(sc.formula), sc.T))
    p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, r)
    lb, ub = p.vars.bounds()
    u = p.layout.u
    assert np.all(lb[u] == -1.0) and np.all(ub[u] == 1.0)
    assert np.all(lb[p.layout.lam] == 0.0) and np.all(ub[p.layout.lam] == 1.0)


def test_assemble_errors():
    mu = halfplane_predicate((1.0, 0.0), 0.5, name="mu")
    r = reformulate(leaf(mu, 5))
    with pytest.raises(ValueError):
        assemble(double_integrator(), [0.0, 0.0, 1.0, 0.0], 3, DI_WEIGHTS, Boxes.make(4, 2), r)
    with pytest.raises(ValueError):
        assemble(double_integrator(), [0.0, 0.0, 1.0], 6, DI_WEIGHTS, Boxes.make(4, 2), r)


def test_weights_validation():
    with pytest.raises(ValueError):
        Weights(0.0, np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        Weights(1.0, -np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        Weights(1.0, np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))


def test_objective_at_witness_equals_original_objective():
    rng = np.random.default_rng(4)
    sc = builtin_scenario("two-target")
    r = reformulate(prepare_tree(to_nnf(sc.formula), sc.T))
    p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, r)
    for _ in range(10):
        traj = Trajectory(rng.uniform(0, 10, (4, sc.T + 1)), rng.standard_normal((2, sc.T + 1)))
        z = p.layout.pack(traj, warm_start(r, traj))
        rob = eval_robustness(sc.formula, traj)
        assert p.f(z) == pytest.approx(original_objective(traj, rob, sc.weights), rel=1e-13)
        assert p.layout.trajectory(z).states.tolist() == traj.states.tolist()


def test_every_builtin_block_passes_fd_check():
    rng = np.random.default_rng(5)
    for sc in builtin_scenarios():
        r = reformulate(prepare_tree(to_nnf(sc.formula), sc.T))
        p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, r)
        lb, ub = p.vars.bounds()
        z = _random_point(rng, lb, ub)
        for f in p.functions():
            assert fd_check(f, z) <= 1e-5, (sc.name, f.name)


# end to end

def test_reach_one_target_from_warm_start():
    preds = {"goal": circle_predicate((4.0, 3.0), 1.0, name="goal")}
    sc = Scenario("reach", double_integrator(), 10, np.zeros(4), DI_WEIGHTS, preds, "F[0,10] goal",
                  input_box=(-1.0, 1.0))
    ref = waypoint_trajectory(sc.dynamics, sc.x0, sc.T, [0, 10], [[0, 0], [4, 3]])
    res = solve_exact(Prepared.of(sc), ref)
    assert res.success
    assert res.robustness >= 0
    assert res.robustness == eval_robustness(sc.formula, res.trajectory)


def test_solve_is_deterministic():
    p, r = _leaf_problem(T=4)
    traj = Trajectory(np.zeros((4, 5)), np.zeros((2, 5)))
    z0 = p.layout.pack(traj, warm_start(r, traj))
    a, b = solve(p, z0), solve(p, z0)
    assert a.status == b.status and a.objective == b.objective and a.iterations == b.iterations
    assert np.array_equal(a.x, b.x)
