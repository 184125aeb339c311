from fractions import Fraction

import numpy as np
import pytest

from pocan.errors import SingularSystemError
from pocan.linalg import frac_array, identity, inverse_exact, rank_exact, solve_exact, solve_float


def test_solve_exact():
    a = frac_array([[2, 1], [1, 3]])
    x = solve_exact(a, frac_array([3, 5]))
    assert list(x) == [Fraction(4, 5), Fraction(7, 5)]


def test_inverse_exact():
    a = frac_array([["1/2", 0], [1, 4]])
    assert (inverse_exact(a).dot(a) == identity(2)).all()


def test_singular_systems_are_reported():
    a = frac_array([[1, 2], [2, 4]])
    assert rank_exact(a) == 1
    with pytest.raises(SingularSystemError):
        solve_exact(a, frac_array([1, 1]))
    with pytest.raises(SingularSystemError):
        solve_float(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


def test_solve_float_matches_exact(rng):
    a = np.eye(5) - rng.random((5, 5)) / 10
    b = rng.random(5)
    exact = solve_exact(frac_array(a.tolist()), frac_array(b.tolist()))
    assert solve_float(a, b) == pytest.approx([float(v) for v in exact], rel=1e-12)


def test_empty_system():
    assert solve_exact(np.zeros((0, 0), dtype=object), np.array([], dtype=object)).size == 0
    assert solve_float(np.zeros((0, 0)), np.zeros(0)).size == 0
