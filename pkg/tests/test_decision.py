# Файл: tests/test_decision.py
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import INDUCED_RULE_CACHE_SIZE
from src.calibeat_engine.binning import from_forecasts, joint
from src.calibeat_engine.decision import (
    avg_utility,
    check_maximizer,
    gain_statistics,
    induced_rule,
    make_utility,
    no_regret_check,
    normalize_utility,
    regret,
    swap_vs_forecast_regret,
    threshold_utility,
    utility_from_rule,
    utility_gain_check,
)
from src.calibeat_engine.errors import LengthMismatch, NotARefinement, UnknownRule
from src.calibeat_engine.procedures import replay_example_1
from src.calibeat_engine.scores import avg_entropy, brier, reference_binning
from src.calibeat_engine.scoring import loss_matrix
from src.calibeat_engine.simplex import ActionSet, from_scalar, quasi_random_points, trusted_dist

TOL = 1e-9


def _joint_bins(transcript):
    return joint(reference_binning(transcript.reference), from_forecasts(transcript.forecasts))


def test_threshold_utility_induces_step_rule(binary, step):
    C = np.array([[1 - p, p] for p in np.linspace(0, 1, 21)])
    induced = np.asarray(loss_matrix(induced_rule(threshold_utility(binary)), C), dtype=float)
    assert np.array_equal(induced, np.asarray(loss_matrix(step, C), dtype=float))


def test_induced_rule_cache_is_bounded(binary):
    u = threshold_utility(binary)
    assert induced_rule(u) is induced_rule(u)
    assert induced_rule.cache_info().maxsize == INDUCED_RULE_CACHE_SIZE
    for _ in range(INDUCED_RULE_CACHE_SIZE + 5):
        induced_rule(threshold_utility(binary))
    assert induced_rule.cache_info().currsize <= INDUCED_RULE_CACHE_SIZE


def test_regret_on_own_forecasts_is_zero(example1):
    u = threshold_utility()
    report = regret(u, example1.actions, example1.forecasts, from_forecasts(example1.forecasts))
    assert report.avg_utility == Fraction(-3, 10)
    assert report.regret == 0
    assert report.brute_force_utility == report.best_remap_utility


def test_regret_on_joint_bins_matches_calibration(example1):
    u = threshold_utility()
    report = regret(u, example1.actions, example1.forecasts, _joint_bins(example1))
    assert report.regret == Fraction(3, 10)
    assert report.brute_force_utility == 0
    assert float(report.matched_calibration) == pytest.approx(0.3)
    assert abs(report.residual) < TOL
    assert report.to_dict()["regret"] == "3/10"


def test_regret_requires_forecast_measurable_bins(example1):
    with pytest.raises(NotARefinement):
        regret(threshold_utility(), example1.actions, example1.forecasts, reference_binning(example1.reference))


def test_brute_force_skipped_above_limit(binary):
    u = make_utility(binary, ("low", "mid", "high"), [[0, 1, 2], [2, 1, 0]])
    forecasts = [from_scalar(binary, Fraction(k, 12)) for k in range(13)]
    actions = ["1" if k % 2 else "0" for k in range(13)]
    report = regret(u, actions, forecasts, from_forecasts(forecasts))
    assert report.brute_force_utility is None
    assert float(report.regret) == pytest.approx(float(report.matched_calibration))


def test_utility_gain_decomposition(example1):
    u = threshold_utility()
    result = utility_gain_check(u, example1.actions, example1.reference, example1.forecasts, _joint_bins(example1))
    assert abs(result["residual"]) < TOL
    with pytest.raises(NotARefinement):
        utility_gain_check(
            u, example1.actions, example1.reference, example1.forecasts, from_forecasts(example1.forecasts)
        )


def test_swap_regret_not_above_forecast_regret(example1):
    swap, forecast = swap_vs_forecast_regret(threshold_utility(), example1.actions, example1.forecasts)
    assert float(swap) <= float(forecast) + TOL


def test_no_regret_check_for_several_utilities(example1, binary):
    umbrella = make_utility(binary, ("stay", "umbrella"), [[0, Fraction(-1, 4)], [-1, Fraction(-1, 4)]], name="umbrella")
    result = no_regret_check([threshold_utility(), umbrella], example1.actions, example1.forecasts)
    assert set(result) == {"threshold", "umbrella"}
    for entry in result.values():
        assert float(entry["regret"]) == pytest.approx(float(entry["calibration"]))


def test_make_utility_errors(binary):
    with pytest.raises(LengthMismatch):
        make_utility(binary, ("x", "y"), [[0, 1]])
    with pytest.raises(UnknownRule):
        make_utility(binary, ("x",), [[0], [1]], tie_rule="random")


def test_normalize_utility():
    u = normalize_utility(threshold_utility())
    assert u.name == "threshold@bounded"
    assert u.payoff_range_norm() == pytest.approx(1.0)


def test_utility_from_quadratic_rule(example1, quadratic):
    u = utility_from_rule(quadratic)
    expected = -brier(quadratic, example1.actions, example1.forecasts) - avg_entropy(quadratic, example1.actions)
    assert float(avg_utility(u, example1.actions, example1.forecasts)) == pytest.approx(float(expected))
    assert float(expected) == pytest.approx(0.7)


def test_avg_utility_length_mismatch(example1):
    with pytest.raises(LengthMismatch):
        avg_utility(threshold_utility(), example1.actions[:3], example1.forecasts)


def test_gain_statistics_keys():
    runs = [replay_example_1(), replay_example_1(m=2)]
    stats = gain_statistics(threshold_utility(), runs)
    assert set(stats) == {"gain_minus_regret_b", "gain_minus_regret_b_joint", "regret_c", "regret_c_joint"}
    assert stats["regret_c"] == (pytest.approx(0.0), pytest.approx(0.0))
    assert stats["regret_c_joint"][0] == pytest.approx(0.3)


@settings(deadline=None, max_examples=30)
@given(st.integers(min_value=0, max_value=10_000))
def test_best_response_is_a_maximizer(seed):
    binary = ActionSet.binary()
    u = make_utility(binary, ("stay", "umbrella"), [[0, -0.25], [-1, -0.25]])
    samples = [trusted_dist(binary, p) for p in quasi_random_points(2, 50, seed)]
    assert check_maximizer(u, samples, np.eye(2))
