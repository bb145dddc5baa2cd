import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import signal
from stlreform.checks import lemma1_suite, random_case
from stlreform.smooth import (SmoothParams, compiled_smooth, error_lower_bounds, smooth_max,
                              smooth_min, smooth_robustness)
from stlreform.tree import CompiledTree, eval_tree, leaf, min_node, prepare_tree
from conftest import coord

vectors = st.lists(st.floats(-10.0, 10.0, allow_nan=False), min_size=1, max_size=8)
ks = st.sampled_from([0.5, 1.0, 5.0, 25.0])


def test_smooth_max_examples():
    assert smooth_max([0.0, 0.0], 3.0) == 0.0
    assert smooth_max([1.0, 0.0], 1.0) == pytest.approx(math.e / (math.e + 1), abs=1e-15)
    assert smooth_max([1.0, 0.0], 1.0) == pytest.approx(0.731059, abs=1e-6)
    assert smooth_max([-2.5], 7.0) == -2.5


def test_smooth_min_examples():
    assert smooth_min([0.0, 0.0], 1.0) == pytest.approx(-math.log(2), abs=1e-15)
    assert smooth_min([1.0, 0.0], 1.0) == pytest.approx(-math.log1p(math.exp(-1)), abs=1e-15)
    assert smooth_min([1.0, 0.0], 1.0) == pytest.approx(-0.313262, abs=1e-6)
    assert smooth_min([4.0], 0.1) == 4.0


def test_empty_and_bad_k():
    with pytest.raises(ValueError):
        smooth_max([], 1.0)
    with pytest.raises(ValueError):
        smooth_min([], 1.0)
    with pytest.raises(ValueError):
        smooth_min([1.0], 0.0)
    with pytest.raises(ValueError):
        SmoothParams(-1.0)


def test_no_overflow_for_large_k():
    a = [1000.0, 999.0, -1000.0]
    assert np.isfinite(smooth_max(a, 100.0)) and smooth_max(a, 100.0) <= 1000.0
    assert np.isfinite(smooth_min(a, 100.0)) and smooth_min(a, 100.0) <= -1000.0


def test_lower_bound_examples():
    lb_max, lb_min = error_lower_bounds([1.0, 0.0], 1.0)
    assert lb_max == pytest.approx(1 / (math.e + 1), abs=1e-15)
    assert lb_max == pytest.approx(0.268941, abs=1e-6)
    assert lb_max == pytest.approx(1.0 - smooth_max([1.0, 0.0], 1.0), abs=1e-15)
    assert lb_min == pytest.approx(0.313262, abs=1e-6)
    assert lb_min == pytest.approx(0.0 - smooth_min([1.0, 0.0], 1.0), abs=1e-15)
    lb_max, lb_min = error_lower_bounds([5.0, 5.0], 2.0)
    assert lb_max == 0.0
    assert lb_min == pytest.approx(0.5 * math.log(2), abs=1e-15)
    assert lb_min == pytest.approx(0.346574, abs=1e-6)


def test_lower_bounds_need_two_entries():
    with pytest.raises(ValueError):
        error_lower_bounds([1.0], 1.0)


def _reference_bounds(a, k):
    # direct transcription of the bound formulas with math.fsum on sorted data
    a = sorted(a, reverse=True)
    m = len(a)
    r = sum(1 for v in a if v == a[0])
    s = sum(1 for v in a if v == a[-1])
    z = math.fsum(math.exp(k * (v - a[0])) for v in a)
    lb_max = 0.0 if r == m else (a[0] - a[r]) * math.fsum(math.exp(k * (v - a[0])) for v in a[r:]) / z
    lb_min = math.log(s + math.fsum(math.exp(-k * (v - a[-1])) for v in a[: m - s])) / k
    return lb_max, lb_min


@settings(max_examples=300, deadline=None)
@given(vectors.filter(lambda a: len(a) >= 2), ks)
def test_bounds_match_reference_and_hold(a, k):
    lb_max, lb_min = error_lower_bounds(a, k)
    ref_max, ref_min = _reference_bounds(a, k)
    assert lb_max == pytest.approx(ref_max, rel=1e-12, abs=1e-13)
    assert lb_min == pytest.approx(ref_min, rel=1e-12, abs=1e-13)
    assert max(a) - smooth_max(a, k) >= lb_max - 1e-12
    assert min(a) - smooth_min(a, k) >= lb_min - 1e-12


@settings(max_examples=300, deadline=None)
@given(vectors, ks)
def test_under_approximation(a, k):
    assert smooth_max(a, k) <= max(a) + 1e-12
    assert smooth_min(a, k) <= min(a) + 1e-12


@settings(max_examples=200, deadline=None)
@given(vectors.filter(lambda a: len(a) >= 2), ks, st.randoms(use_true_random=False))
def test_permutation_invariance(a, k, rnd):
    b = a[:]
    rnd.shuffle(b)
    assert smooth_max(b, k) == pytest.approx(smooth_max(a, k), rel=1e-13, abs=1e-13)
    assert smooth_min(b, k) == pytest.approx(smooth_min(a, k), rel=1e-13, abs=1e-13)
    assert error_lower_bounds(b, k) == error_lower_bounds(a, k)


def test_min_error_strictly_positive_when_resolvable():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        a = rng.uniform(-1.0, 1.0, int(rng.integers(2, 9)))
        k = float(rng.choice([0.5, 1.0, 5.0]))
        assert a.min() - smooth_min(a, k) > 0


def test_smooth_robustness_examples():
    p = coord("mu").predicate
    x = signal([0.0, 0.0, 0.5])
    assert smooth_robustness(leaf(p, 2), x, 5.0) == eval_tree(leaf(p, 2), x)
    assert smooth_robustness(min_node([leaf(p, 0), leaf(p, 1)]), x, 1.0) == pytest.approx(-math.log(2))


def test_smooth_robustness_is_sound_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        f, T, x = random_case(rng)
        root = prepare_tree(f, T)
        k = float(rng.choice([1.0, 5.0, 25.0, 100.0]))
        assert smooth_robustness(root, x, k) <= eval_tree(root, x) + 1e-12


def test_compiled_smooth_matches_recursive_and_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(50):
        f, T, x = random_case(rng, max_T=8)
        root = prepare_tree(f, T)
        ct = CompiledTree(root)
        k = 5.0
        val, grad = compiled_smooth(ct, x, k, gradient=True)
        assert val == pytest.approx(smooth_robustness(root, x, k), rel=1e-12, abs=1e-12)
        h = 1e-6
        for _ in range(3):
            i, t = int(rng.integers(2)), int(rng.integers(T + 1))
            xp, xm = x.copy(), x.copy()
            xp[i, t] += h
            xm[i, t] -= h
            fd = (compiled_smooth(ct, xp, k) - compiled_smooth(ct, xm, k)) / (2 * h)
            assert grad[i, t] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_lemma1_suite_catches_a_sign_error():
    def broken_min(a, k):
        a = np.asarray(a, dtype=float)
        lo = a.min()
        return float(lo + np.log(np.exp(-k * (a - lo)).sum()) / k)

    assert lemma1_suite(n=500).passed
    res = lemma1_suite(n=500, smin=broken_min)
    assert not res.passed
    assert "non-positive" in res.detail
