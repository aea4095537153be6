# Файл: tests/test_scoring.py
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.calibeat_engine.errors import BadAlpha, MissingConstant, UnknownRule, WrongArity
from src.calibeat_engine.scoring import (
    check_properness,
    divergence,
    entropy,
    estimate_constants,
    expected_loss,
    loss_matrix,
    make_constant_rule,
    make_entropy_rule,
    make_power,
    make_quadratic,
    make_spherical,
    make_step_rule,
    normalize_rule,
    rule_from_id,
)
from src.calibeat_engine.simplex import ActionSet, from_scalar, pure

TOL = 1e-10
probabilities = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def test_quadratic_values(binary, quadratic):
    c = from_scalar(binary, Fraction(1, 2))
    assert expected_loss(quadratic, pure(binary, "1", exact=True), c) == Fraction(-1, 2)
    assert entropy(quadratic, pure(binary, "0", exact=True)) == -1
    assert divergence(quadratic, from_scalar(binary, Fraction(1, 5)), c) == Fraction(18, 100)


def test_spherical_entropy(binary, spherical2):
    assert entropy(spherical2, from_scalar(binary, 0.2)) == pytest.approx(-math.sqrt(0.68))
    assert entropy(spherical2, from_scalar(binary, 0.5)) == pytest.approx(-math.sqrt(0.5))


def test_step_rule_divergence(binary, step):
    d, c = from_scalar(binary, 0.8), from_scalar(binary, 0.3)
    assert divergence(step, d, c) == pytest.approx(0.6)
    assert entropy(step, pure(binary, "1")) == 0
    assert entropy(step, from_scalar(binary, 0.3)) == pytest.approx(0.3)


def test_step_rule_tie_choice(binary):
    half = from_scalar(binary, 0.5)
    zero = pure(binary, "0")
    assert expected_loss(make_step_rule(binary), zero, half) == 1
    assert expected_loss(make_step_rule(binary, tie_high=False), zero, half) == 0


@pytest.mark.parametrize("rule_id", ["quadratic", "spherical:2", "spherical:3", "spherical:1.5", "power:2", "power:3", "power:0.5", "step", "step:low"])
def test_catalog_rules_are_proper(binary, rule_id):
    rule = rule_from_id(binary, rule_id)
    assert rule.proper
    assert check_properness(rule, samples=300, seed=3)


def test_proper_on_three_actions():
    actions = ActionSet(("a", "b", "c"))
    for rule in (make_quadratic(actions), make_spherical(actions, 2), make_power(actions, 3)):
        assert rule.proper


def test_bad_parameters(binary):
    with pytest.raises(BadAlpha):
        make_spherical(binary, 1)
    with pytest.raises(BadAlpha):
        make_power(binary, 1)
    with pytest.raises(WrongArity):
        make_step_rule(ActionSet(("a", "b", "c")))
    with pytest.raises(UnknownRule):
        rule_from_id(binary, "logarithmic")
    with pytest.raises(UnknownRule):
        rule_from_id(binary, "spherical:x")


def test_normalization(binary):
    rule = rule_from_id(binary, "quadratic@lipschitz")
    assert rule.name == "quadratic@lipschitz"
    assert rule.declared_lipschitz == pytest.approx(1.0)
    with pytest.raises(MissingConstant):
        rule_from_id(binary, "step@lipschitz")
    with pytest.raises(UnknownRule):
        normalize_rule(make_quadratic(binary), "huge")


def test_constant_rule_has_zero_divergence(binary):
    rule = make_constant_rule(binary, 3)
    assert divergence(rule, pure(binary, "1"), from_scalar(binary, 0.2)) == 0


def test_entropy_rule_reproduces_catalog(binary):
    C = np.array([[0.5, 0.5], [1.0, 0.0], [0.2, 0.8], [0.9, 0.1]])
    quadratic = make_entropy_rule(
        binary,
        lambda X: -(X * X).sum(axis=1),
        lambda X: -2 * X,
        name="quadratic-from-entropy",
    )
    assert np.allclose(loss_matrix(quadratic, C), loss_matrix(make_quadratic(binary), C))

    spherical = make_entropy_rule(
        binary,
        lambda X: -np.linalg.norm(X, axis=1),
        lambda X: -X / np.linalg.norm(X, axis=1, keepdims=True),
        name="spherical-from-entropy",
    )
    assert np.allclose(loss_matrix(spherical, C), loss_matrix(make_spherical(binary, 2), C))


def test_empirical_constants_do_not_exceed_declared(binary):
    for rule in (make_quadratic(binary), make_spherical(binary, 2), make_power(binary, 2)):
        m_bound, m_lipschitz = estimate_constants(rule, samples=400, seed=11)
        assert m_bound <= rule.declared_bound + 1e-9
        assert m_lipschitz <= rule.declared_lipschitz + 1e-6


def test_step_rule_estimated_lipschitz_grows(binary, step):
    _, coarse = estimate_constants(step, samples=10, seed=1)
    _, fine = estimate_constants(step, samples=1000, seed=1)
    assert fine >= coarse
    assert fine >= 500


def test_loss_matrix_is_vectorized(binary, quadratic):
    C = np.array([[0.5, 0.5], [1.0, 0.0], [0.2, 0.8]])
    L = loss_matrix(quadratic, C)
    assert L.shape == (3, 2)
    assert L[1].tolist() == [-1.0, 1.0]


@settings(max_examples=100, deadline=None)
@given(p=probabilities, q=probabilities)
def test_quadratic_divergence_is_squared_distance(p, q):
    binary = ActionSet.binary()
    rule = make_quadratic(binary)
    value = divergence(rule, from_scalar(binary, p), from_scalar(binary, q))
    assert value == pytest.approx(2 * (p - q) ** 2, abs=TOL)


@settings(max_examples=100, deadline=None)
@given(p=probabilities, q=probabilities, alpha=st.sampled_from([1.5, 2.0, 3.0]))
def test_spherical_divergence_nonnegative(p, q, alpha):
    binary = ActionSet.binary()
    rule = make_spherical(binary, alpha)
    assert divergence(rule, from_scalar(binary, p), from_scalar(binary, q)) >= -TOL
