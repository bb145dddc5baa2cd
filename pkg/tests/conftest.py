import numpy as np
import pytest

from stlreform.formula import Pred
from stlreform.predicates import halfplane_predicate


def coord(name: str, i: int = 0, dims: int = 1, offset: float = 0.0):
    """Predicate ``h(x) = x[i] - offset``; handy for hand-written leaf values."""
    normal = [0.0] * dims
    normal[i] = 1.0
    return Pred(halfplane_predicate(normal, offset, name=name, indices=tuple(range(dims))))


def signal(*rows):
    """States array with one row per coordinate."""
    return np.array(rows, dtype=float)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
