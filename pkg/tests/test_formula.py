import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import coord, signal
from strategies import POOL, formula_and_states, satisfies, satisfies_classical
from stlreform.formula import (Always, And, Eventually, Interval, Not, Or, Pred, STLSyntaxError,
                               Trajectory, UnsupportedNegation, Until, eval_robustness, horizon,
                               is_nnf, parse, to_nnf)
from stlreform.predicates import SymbolPredicate, circle_predicate, halfplane_predicate
from stlreform.scenarios import builtin_scenario


def sym(name):
    return Pred(SymbolPredicate(name))


# parse

def test_parse_conjunction():
    assert parse("mu1 and mu2") == And((sym("mu1"), sym("mu2")))


def test_parse_nested_temporal():
    f = parse("G[0,2] F[5,7] mu1")
    assert f == Always(Interval(0, 2), Eventually(Interval(5, 7), sym("mu1")))


def test_parse_chains_are_flattened():
    assert parse("a and b and c") == And((sym("a"), sym("b"), sym("c")))
    assert parse("a or (b or c)") == Or((sym("a"), sym("b"), sym("c")))


def test_parse_precedence():
    f = parse("a U[1,3] b or c and not d")
    assert f == Or((Until(Interval(1, 3), sym("a"), sym("b")), And((sym("c"), Not(sym("d"))))))


def test_until_needs_an_interval():
    with pytest.raises(STLSyntaxError, match="interval") as exc:
        parse("mu1 U mu2")
    assert exc.value.position == 4


@pytest.mark.parametrize("text", ["G[3,1] mu", "F[0.5,2] mu", "G[-1,2] mu", "mu1 and", "(mu1", "G[0 2] mu"])
def test_parse_errors(text):
    with pytest.raises(STLSyntaxError):
        parse(text)


def test_parse_binds_predicates():
    p = halfplane_predicate((1.0, 0.0), 0.0, name="a")
    f = parse("F[0,1] a", {"a": p})
    assert f.child.predicate is p
    with pytest.raises(STLSyntaxError, match="unknown predicate"):
        parse("a and b", {"a": p})


def test_printing_round_trips():
    text = "G[0,2] (F[5,7] mu1 and (mu2 U[1,3] mu3)) or not mu4"
    f = parse(text)
    assert parse(str(f)) == f


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(3, 1)
    with pytest.raises(ValueError):
        Interval(0.0, 1)
    assert list(Interval(2, 4)) == [2, 3, 4]


def test_and_needs_two_children():
    with pytest.raises(ValueError):
        And((sym("a"),))


# normal form

def test_nnf_of_negated_predicate_flips_sign():
    mu = coord("mu")
    g = to_nnf(Not(mu))
    x = np.array([2.5])
    assert isinstance(g, Pred)
    assert g.predicate.value(x) == -mu.predicate.value(x)


def test_nnf_duality_of_always():
    mu4 = Pred(circle_predicate((0.0, 0.0), 1.0, name="mu4"))
    g = to_nnf(Not(Always(Interval(0, 50), mu4)))
    assert isinstance(g, Eventually) and g.interval == Interval(0, 50)
    assert isinstance(g.child, Pred)
    pt = np.array([0.3, -0.2])
    assert g.child.predicate.value(pt) == -mu4.predicate.value(pt)


def test_nnf_rejects_negated_until():
    with pytest.raises(UnsupportedNegation):
        to_nnf(Not(Until(Interval(2, 10), sym("mu3"), sym("mu1"))))


def test_nnf_double_negation_and_de_morgan():
    a, b = sym("a"), sym("b")
    assert to_nnf(Not(Not(a))) == a
    g = to_nnf(Not(And((a, b))))
    assert isinstance(g, Or) and all(isinstance(c, Pred) for c in g.children)
    assert [c.predicate.name for c in g.children] == ["~a", "~b"]


# horizon

def test_horizon_examples():
    assert horizon(sym("mu")) == 0
    assert horizon(Always(Interval(0, 2), Eventually(Interval(5, 7), sym("mu1")))) == 9
    assert horizon(parse("a U[1,4] F[0,2] b")) == 6
    assert horizon(builtin_scenario("nonlinear").formula) == 50


# discrete robustness

def test_eval_leaf():
    f = coord("x1")
    assert eval_robustness(f, signal([3.0, 7.0])) == 3.0


def test_eval_and_is_min():
    f = And((coord("a", 0, 2), coord("b", 1, 2)))
    assert eval_robustness(f, signal([2.0], [-1.0])) == -1.0


def test_eval_eventually_is_max():
    f = Eventually(Interval(0, 2), coord("mu"))
    assert eval_robustness(f, signal([-1.0, 4.0, 2.0])) == 4.0


def test_eval_until_tree_convention():
    # mu1 on row 0, mu2 on row 1
    f = Until(Interval(0, 2), coord("mu1", 0, 2), coord("mu2", 1, 2))
    x = signal([3.0, 2.0, 1.0], [-5.0, 0.0, -1.0])
    # t'=0: -5; t'=1: min(3, 0) = 0; t'=2: min(3, 2, -1) = -1
    assert eval_robustness(f, x) == 0.0


def test_eval_accepts_trajectory_and_time_offset():
    f = Eventually(Interval(0, 1), coord("mu"))
    traj = Trajectory(signal([0.0, 1.0, 5.0, 2.0]))
    assert eval_robustness(f, traj, 2) == 5.0


def test_eval_horizon_violation():
    with pytest.raises(ValueError, match="horizon"):
        eval_robustness(Always(Interval(0, 3), coord("mu")), signal([1.0, 2.0]))


def test_trajectory_shape_check():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 4)), np.zeros((1, 3)))
    assert Trajectory(np.zeros((2, 4)), np.zeros((1, 4))).T == 3


# properties

@settings(max_examples=500, deadline=None)
@given(formula_and_states(negations=False))
def test_sign_matches_boolean_semantics(case):
    f, x = case
    assert (eval_robustness(f, x) >= 0) == satisfies(f, x)


@settings(max_examples=300, deadline=None)
@given(formula_and_states(negations=True))
def test_sign_matches_normal_form_semantics_with_negations(case):
    f, x = case
    assert (eval_robustness(f, x) >= 0) == satisfies(to_nnf(f), x)


def test_sign_matches_classical_semantics_on_generic_data():
    # continuous random data has no leaf exactly at zero, where strict and
    # non-strict negation would disagree
    from stlreform.checks import random_formula
    rng = np.random.default_rng(7)
    for _ in range(500):
        f = random_formula(rng, 4, 10, nnf=False)
        x = rng.standard_normal((2, horizon(f) + 1)) * 1.5
        assert (eval_robustness(f, x) >= 0) == satisfies_classical(f, x)


@settings(max_examples=300, deadline=None)
@given(formula_and_states(negations=True))
def test_nnf_preserves_robustness(case):
    f, x = case
    g = to_nnf(f)
    assert is_nnf(g)
    for t in range(x.shape[1] - horizon(f)):
        assert eval_robustness(g, x, t) == eval_robustness(f, x, t)


@settings(max_examples=200, deadline=None)
@given(formula_and_states(negations=True), st.randoms(use_true_random=False))
def test_and_or_permutation_invariance(case, rnd):
    f, x = case
    kids = [f, Pred(POOL[0]), Pred(POOL[2]), Eventually(Interval(0, 0), Pred(POOL[3]))]
    shuffled = kids[:]
    rnd.shuffle(shuffled)
    for op in (And, Or):
        assert eval_robustness(op(tuple(shuffled)), x) == eval_robustness(op(tuple(kids)), x)
