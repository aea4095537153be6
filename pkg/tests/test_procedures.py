# Файл: tests/test_procedures.py
from fractions import Fraction

import numpy as np
import pytest

from src.calibeat_engine.binning import from_forecasts, joint, joint_many
from src.calibeat_engine.errors import GridMissing, LengthMismatch, UnknownProcedure, UnknownStrategy
from src.calibeat_engine.procedures import (
    SIMULATION_COLUMNS,
    AdversarySpec,
    ReferenceSpec,
    _linprog_minimax,
    _two_action_minimax,
    bias_increments,
    example1_spherical_gap,
    grid_covers,
    make_grid,
    reference_sequence,
    replay_step_failure,
    run_procedure,
    run_simple_procedure,
    simulation_rows,
)
from src.calibeat_engine.scores import brier, calibration, reference_binning, refinement
from src.calibeat_engine.scoring import make_quadratic, make_spherical, make_step_rule
from src.calibeat_engine.simplex import ActionSet, from_scalar

TOL = 1e-9


def _references(binary, kind, bins, horizon, seed, count=1):
    return [
        reference_sequence(ReferenceSpec(kind, bins + n), binary, horizon, np.random.default_rng([seed, n]))
        for n in range(count)
    ]


def test_simple_procedure_forecasts_running_averages(binary):
    run = run_simple_procedure(
        binary, 5, [["b"] * 5], AdversarySpec("pattern", pattern=("1", "0")),
        seed_forecast=from_scalar(binary, Fraction(1, 2)), exact=True,
    )
    assert [c.scalar for c in run.forecasts] == [Fraction(1, 2), 1, Fraction(1, 2), Fraction(2, 3), Fraction(1, 2)]


def test_simple_procedure_is_calibrated_per_reference_bin(binary, quadratic):
    horizon = 2000
    refs = _references(binary, "cyclic", 3, horizon, seed=4)
    run = run_procedure("simple", binary, horizon, refs, AdversarySpec("flip_farthest"), seed=4)
    rows = simulation_rows(run, [quadratic, make_spherical(binary, 2)], [500, 2000], "simple", seed=4)
    assert [row["t"] for row in rows] == [500, 500, 2000, 2000]
    for row in rows:
        assert row["gap"] <= row["bound"] + TOL
        assert set(row) == set(SIMULATION_COLUMNS)


def test_multicalibeating_each_reference(binary, quadratic):
    horizon = 1500
    refs = _references(binary, "cyclic", 2, horizon, seed=1, count=2)
    run = run_procedure("multi", binary, horizon, refs, AdversarySpec("stochastic"), seed=1)
    b_joint = reference_binning(run.reference)
    assert len(b_joint.counts()) == 6
    B = float(brier(quadratic, run.actions, run.forecasts))
    n_bins = len(b_joint.counts())
    bound = 2 * quadratic.declared_lipschitz * (n_bins / horizon) * (np.log(horizon / n_bins) + 1)
    for ref in refs:
        assert B <= float(refinement(quadratic, run.actions, reference_binning(ref))) + bound + TOL


def test_step_rule_failure(step):
    run = replay_step_failure(200)
    b = reference_binning(run.reference)
    B = brier(step, run.actions, run.forecasts)
    R = refinement(step, run.actions, b, exact=True)
    assert B == 1
    assert R == Fraction(1, 2)
    assert B - R >= Fraction(2, 5)


def test_step_rule_failure_for_other_tie_choice(binary):
    rule = make_step_rule(binary, tie_high=False)
    run = replay_step_failure(100, tie_high=False)
    assert brier(rule, run.actions, run.forecasts) == 1


def test_grid_covers_simplex(binary):
    assert grid_covers(make_grid(binary, 0.1))
    assert grid_covers(make_grid(ActionSet(("a", "b", "c")), 0.25), samples=500)


def test_two_action_minimax_matches_linear_program():
    rng = np.random.default_rng(2)
    for _ in range(20):
        psi = rng.normal(size=(8, 2))
        exact_eta = _two_action_minimax(psi)
        lp_eta = _linprog_minimax(psi)
        assert (exact_eta @ psi).max() == pytest.approx((lp_eta @ psi).max(), abs=1e-8)


def test_bias_increments_vanish_on_empty_cells(binary):
    grid = make_grid(binary, 0.2)
    counts = np.zeros(grid.points.shape[0])
    sums = np.zeros(grid.points.shape)
    assert np.allclose(bias_increments(grid.points, counts, sums), 0.0)


@pytest.mark.slow
def test_grid_forecaster_calibrates_joint_bins(binary, quadratic):
    horizon = 3000
    refs = _references(binary, "random", 2, horizon, seed=7)
    run = run_procedure("grid", binary, horizon, refs, AdversarySpec("flip_farthest"), seed=7, delta=0.1)
    jb = joint(reference_binning(run.reference), from_forecasts(run.forecasts))
    assert float(calibration(quadratic, run.actions, run.forecasts, jb)) < 0.05
    for row in simulation_rows(run, [quadratic], [1000, 3000], "grid", seed=7):
        assert row["gap"] <= row["bound"] + TOL


def test_grid_forecaster_is_reproducible(binary):
    refs = _references(binary, "cyclic", 2, 200, seed=3)
    first = run_procedure("grid", binary, 200, refs, AdversarySpec("flip_farthest"), seed=3, delta=0.2)
    second = run_procedure("grid", binary, 200, refs, AdversarySpec("flip_farthest"), seed=3, delta=0.2)
    assert first.actions == second.actions
    assert [c.key() for c in first.forecasts] == [c.key() for c in second.forecasts]


def test_multi_references_on_grid(binary):
    refs = _references(binary, "cyclic", 2, 300, seed=0, count=2)
    run = run_procedure("grid", binary, 300, refs, AdversarySpec("stochastic"), seed=0, delta=0.2)
    assert len(joint_many([reference_binning(r) for r in refs]).counts()) == 6
    assert all(isinstance(b, tuple) for b in run.reference)


def test_unknown_identifiers(binary):
    refs = [["b"] * 3]
    with pytest.raises(UnknownProcedure):
        run_procedure("oracle", binary, 3, refs, AdversarySpec("pattern"))
    with pytest.raises(UnknownStrategy):
        run_procedure("simple", binary, 3, refs, AdversarySpec("clairvoyant"))
    with pytest.raises(UnknownStrategy):
        reference_sequence(ReferenceSpec("spiral", 2), binary, 3, np.random.default_rng(0))


def test_invalid_run_parameters(binary):
    with pytest.raises(LengthMismatch):
        run_procedure("simple", binary, 5, [["b"] * 3], AdversarySpec("pattern"))
    with pytest.raises(GridMissing):
        make_grid(binary, 0.0)


def test_example1_spherical_gap():
    B, R = example1_spherical_gap(2.0)
    assert B > R
    assert B - R == pytest.approx(0.6 * (1 - 1 / np.sqrt(2)) - (1 - np.sqrt(0.68)))


def test_step_rule_rows_have_no_bound(binary, step):
    run = replay_step_failure(100)
    rows = simulation_rows(run, [step], [100], "simple", seed=0)
    assert rows[0]["bound"] == ""
    assert rows[0]["gap"] == pytest.approx(0.5)
