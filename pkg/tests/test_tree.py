import numpy as np
import pytest
from hypothesis import given, settings

from conftest import coord, signal
from strategies import formula_and_states
from stlreform.checks import random_case
from stlreform.formula import Always, Eventually, Interval, Not, Until, eval_robustness, to_nnf
from stlreform.predicates import SymbolPredicate
from stlreform.scenarios import builtin_scenario
from stlreform.tree import (LEAF, MAX, MIN, CompiledTree, build_tree, count_nodes, dedup,
                            dump_tree, eval_tree, flatten, iter_nodes, leaf, max_node, min_node,
                            prepare_tree)

MU = SymbolPredicate("mu")
MU1, MU2 = SymbolPredicate("mu1"), SymbolPredicate("mu2")


def shape(node):
    """Structure as nested tuples: ('min'|'max', [...]) or (name, t)."""
    if node.kind == LEAF:
        return (node.predicate.name, node.t)
    return (node.kind, [shape(c) for c in node.children])


def test_eventually_is_a_max_over_times():
    root = build_tree(Eventually(Interval(0, 2), coord("mu")), 0)
    assert shape(root) == (MAX, [("mu", 0), ("mu", 1), ("mu", 2)])


def test_until_expansion():
    f = Until(Interval(1, 2), coord("mu1"), coord("mu2"))
    assert shape(build_tree(f, 0)) == (MAX, [
        (MIN, [("mu1", 0), ("mu2", 1)]),
        (MIN, [("mu1", 0), ("mu1", 1), ("mu2", 2)]),
    ])


def test_until_with_zero_offset_collapses_after_flatten():
    f = Until(Interval(0, 1), coord("mu1"), coord("mu2"))
    root = build_tree(f, 0)
    assert shape(root) == (MAX, [(MIN, [("mu2", 0)]), (MIN, [("mu1", 0), ("mu2", 1)])])
    assert shape(flatten(root)) == (MAX, [("mu2", 0), (MIN, [("mu1", 0), ("mu2", 1)])])


def test_atomic_leaf_keeps_time():
    assert shape(build_tree(coord("mu"), 7)) == ("mu", 7)


def test_build_rejects_non_nnf_and_long_horizons():
    with pytest.raises(ValueError, match="normal form"):
        build_tree(Not(coord("mu")), 0)
    with pytest.raises(ValueError, match="horizon"):
        build_tree(Always(Interval(0, 5), coord("mu")), 0, T=3)


def test_flatten_merges_same_type():
    a, b, c = leaf(MU, 0), leaf(MU, 1), leaf(MU, 2)
    assert shape(flatten(min_node([min_node([a, b]), c]))) == (MIN, [("mu", 0), ("mu", 1), ("mu", 2)])


def test_flatten_keeps_alternating_types():
    a, b, c = leaf(MU, 0), leaf(MU, 1), leaf(MU, 2)
    root = max_node([min_node([a, b]), c])
    assert shape(flatten(root)) == shape(root)


def test_flatten_nested_always():
    f = Always(Interval(0, 2), Always(Interval(0, 1), coord("mu")))
    flat = flatten(build_tree(f, 0))
    assert flat.kind == MIN and all(c.is_leaf for c in flat.children)
    assert sorted(c.t for c in flat.children) == [0, 1, 1, 2, 2, 3]
    assert shape(dedup(flat)) == (MIN, [("mu", 0), ("mu", 1), ("mu", 2), ("mu", 3)])


def test_eval_tree_examples():
    x = signal([0.0, 0.0, 0.5])
    assert eval_tree(leaf(coord("mu").predicate, 2), x) == 0.5
    y = signal([-1.0, 4.0, 2.0])
    p = coord("mu").predicate
    assert eval_tree(max_node([leaf(p, 0), leaf(p, 1), leaf(p, 2)]), y) == 4.0


def test_tree_matches_semantics_on_random_formulas():
    rng = np.random.default_rng(3)
    for _ in range(500):
        f, T, x = random_case(rng)
        root = build_tree(f, 0, T)
        assert eval_tree(root, x) == eval_robustness(f, x)


@settings(max_examples=200, deadline=None)
@given(formula_and_states(negations=True))
def test_flatten_properties(case):
    f, x = case
    root = build_tree(to_nnf(f), 0)
    flat = flatten(root)
    assert eval_tree(flat, x) == eval_tree(root, x)
    assert shape(flatten(flat)) == shape(flat)
    assert count_nodes(flat) <= count_nodes(root)
    for node in iter_nodes(flat):
        for c in node.children:
            assert node.kind == LEAF or c.kind != node.kind
    assert eval_tree(prepare_tree(to_nnf(f)), x) == eval_tree(root, x)


@settings(max_examples=200, deadline=None)
@given(formula_and_states(negations=True))
def test_compiled_tree_matches_recursive_evaluation(case):
    f, x = case
    root = prepare_tree(to_nnf(f))
    ct = CompiledTree(root)
    vals = ct.node_values(x)
    nodes = list(iter_nodes(root))
    assert len(nodes) == ct.n_nodes
    for i, node in enumerate(nodes):
        assert vals[i] == eval_tree(node, x)


def test_builtin_trees_use_only_min_and_max():
    for name in ("two-target", "door-puzzle", "nonlinear"):
        sc = builtin_scenario(name)
        root = prepare_tree(to_nnf(sc.formula), sc.T)
        kinds = {n.kind for n in iter_nodes(root)}
        assert kinds <= {LEAF, MIN, MAX}
        assert max(n.t for n in iter_nodes(root) if n.is_leaf) <= sc.T


def test_door_puzzle_contains_until_branches():
    sc = builtin_scenario("door-puzzle")
    assert "U[" in sc.formula_text
    root = build_tree(to_nnf(sc.formula), 0, sc.T)
    # an until node is a max whose branches are mins ending in the right operand
    found = any(n.kind == MAX and len(n.children) > 1 and all(c.kind == MIN for c in n.children)
                for n in iter_nodes(root))
    assert found


def test_dump_tree_is_indented():
    f = Eventually(Interval(0, 1), coord("mu"))
    text = dump_tree(build_tree(f, 0))
    lines = text.splitlines()
    assert lines[0].startswith("max (2)")
    assert lines[1] == "  leaf mu t=0" and lines[2] == "  leaf mu t=1"
