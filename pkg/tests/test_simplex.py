# Файл: tests/test_simplex.py
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.calibeat_engine.errors import (
    ActionSetMismatch,
    EmptyInput,
    LengthMismatch,
    MassNotOne,
    NegativeWeight,
    UnknownLabel,
    ZeroTotalWeight,
)
from src.calibeat_engine.simplex import (
    ActionSet,
    compensated_sum,
    dist_new,
    euclid_dist,
    from_scalar,
    pure,
    quasi_random_points,
    running_average,
    squared_distance,
    to_fraction,
)

TOL = 1e-12


def test_action_set_rejects_duplicates_and_empty():
    with pytest.raises(ActionSetMismatch):
        ActionSet(("0", "0"))
    with pytest.raises(EmptyInput):
        ActionSet(())


def test_action_set_unknown_label(binary):
    with pytest.raises(UnknownLabel):
        binary.index("2")


def test_dist_validation(binary):
    with pytest.raises(NegativeWeight):
        dist_new(binary, [-0.5, 1.5])
    with pytest.raises(MassNotOne):
        dist_new(binary, [0.5, 0.6])
    with pytest.raises(LengthMismatch):
        dist_new(binary, [1.0])


def test_dist_accepts_rounding_within_tolerance(binary):
    d = dist_new(binary, [0.3, 0.7 + 1e-13])
    assert abs(d.weights.sum() - 1.0) <= TOL


def test_exact_mode_keeps_fractions(binary):
    d = dist_new(binary, [Fraction(4, 5), Fraction(1, 5)])
    assert d.exact
    assert d.scalar == Fraction(1, 5)
    with pytest.raises(MassNotOne):
        dist_new(binary, [Fraction(1, 3), Fraction(1, 3)])


def test_from_scalar_places_probability_of_one(binary):
    d = from_scalar(binary, Fraction(1, 5))
    assert d.weights.tolist() == [Fraction(4, 5), Fraction(1, 5)]


def test_to_fraction_uses_decimal_form():
    assert to_fraction(0.2) == Fraction(1, 5)
    assert to_fraction("3/10") == Fraction(3, 10)


def test_running_average_of_vertices(binary):
    avg = running_average([pure(binary, "0", exact=True), pure(binary, "1", exact=True)])
    assert avg.weights.tolist() == [Fraction(1, 2), Fraction(1, 2)]


def test_running_average_weights(binary):
    avg = running_average([pure(binary, "0"), pure(binary, "1")], weights=[3.0, 1.0])
    assert avg.scalar == pytest.approx(0.25)
    with pytest.raises(ZeroTotalWeight):
        running_average([pure(binary, "0")], weights=[0.0])
    with pytest.raises(EmptyInput):
        running_average([])


def test_distances(binary):
    x, y = pure(binary, "0", exact=True), pure(binary, "1", exact=True)
    assert squared_distance(x, y) == 2
    assert euclid_dist(x, y) == pytest.approx(np.sqrt(2))
    with pytest.raises(ActionSetMismatch):
        euclid_dist(x, pure(ActionSet(("a", "b", "c")), "a"))


def test_compensated_sum_exact_and_float():
    assert compensated_sum(np.array([Fraction(1, 3)] * 3, dtype=object)) == 1
    assert compensated_sum(np.array([0.1] * 10)) == 1.0


@settings(max_examples=50, deadline=None)
@given(size=st.integers(min_value=1, max_value=6), n=st.integers(min_value=1, max_value=200))
def test_quasi_random_points_lie_on_simplex(size, n):
    points = quasi_random_points(size, n, seed=7)
    assert points.shape == (n, size)
    assert np.all(points >= 0)
    assert np.allclose(points.sum(axis=1), 1.0)
