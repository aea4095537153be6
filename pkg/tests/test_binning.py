# Файл: tests/test_binning.py
from fractions import Fraction

import pytest

from src.calibeat_engine.binning import (
    PureBinning,
    RefinementWitness,
    check_delta_local,
    check_refines,
    from_forecasts,
    general_binning,
    grid_binning,
    is_forecast_measurable,
    joint,
    joint_many,
    projection_witness,
    smoothed_grid_binning,
    total_witness,
)
from src.calibeat_engine.errors import LengthMismatch, MassNotOne, NegativeWeight, NotARefinement, NotDeltaLocal, ValidationError
from src.calibeat_engine.scores import reference_binning
from src.calibeat_engine.simplex import from_scalar


def test_forecast_binning_counts(example1):
    counts = from_forecasts(example1.forecasts).counts()
    assert sorted(counts.values()) == [2, 2, 6]
    half = (Fraction(1, 2), Fraction(1, 2))
    assert counts[half] == 6


def test_joint_binning_counts(example1):
    b = reference_binning(example1.reference)
    c = from_forecasts(example1.forecasts)
    counts = joint(b, c).counts()
    assert len(counts) == 6
    assert sorted(counts.values()) == [1, 1, 1, 1, 3, 3]


def test_joint_length_mismatch():
    with pytest.raises(LengthMismatch):
        joint(PureBinning(("a", "b")), PureBinning(("a",)))
    with pytest.raises(LengthMismatch):
        joint_many([])


def test_float_forecasts_merge_within_precision(binary):
    forecasts = [from_scalar(binary, 0.3), from_scalar(binary, 0.3 + 1e-12), from_scalar(binary, 0.6)]
    assert len(from_forecasts(forecasts).counts()) == 2


def test_refinement_witnesses(example1):
    b = reference_binning(example1.reference)
    jb = joint(b, from_forecasts(example1.forecasts))
    assert check_refines(jb, b, projection_witness(jb, 0))
    assert check_refines(jb, PureBinning(("all",) * len(jb)), total_witness(jb))
    b_labels = list(b.counts())
    swapped = {
        label: b_labels[1 - b_labels.index(label[0])] if label[1][1] == Fraction(1, 2) else label[0]
        for label in jb.counts()
    }
    shuffled = RefinementWitness(swapped)
    assert not check_refines(jb, b, shuffled)


def test_fractional_binning_refines_its_total():
    g = general_binning([{"u": Fraction(1, 2), "v": Fraction(1, 2)}, {"u": 1}, {"v": Fraction(1, 3), "w": Fraction(2, 3)}])
    assert g.totals().tolist() == [Fraction(3, 2), Fraction(5, 6), Fraction(2, 3)]
    assert not g.is_pure
    assert check_refines(g, PureBinning(("all",) * 3), total_witness(g))


def test_general_binning_validation():
    with pytest.raises(MassNotOne):
        general_binning([{"u": 0.5, "v": 0.4}])
    with pytest.raises(NegativeWeight):
        general_binning([{"u": 1.5, "v": -0.5}])


def test_pure_general_binning_detected():
    g = general_binning([{"u": 1}, {"v": 1}, {"u": 1}])
    assert g.is_pure
    assert g.as_pure().bin_ids == ("u", "v", "u")


def test_fractional_and_delta_errors_are_validation_errors(binary):
    with pytest.raises(NotARefinement):
        general_binning([{"u": 0.5, "v": 0.5}]).as_pure()
    forecasts = [from_scalar(binary, 0.2), from_scalar(binary, 0.3)]
    with pytest.raises(NotDeltaLocal):
        check_delta_local(grid_binning(forecasts, 0.1), forecasts, 0.0)
    assert issubclass(NotARefinement, ValidationError) and NotDeltaLocal.exit_code == 3


def test_forecast_measurability(example1):
    b = reference_binning(example1.reference)
    c = from_forecasts(example1.forecasts)
    assert is_forecast_measurable(c, example1.forecasts)
    assert is_forecast_measurable(joint(b, c), example1.forecasts)
    assert not is_forecast_measurable(b, example1.forecasts)


def test_delta_locality(binary):
    forecasts = [from_scalar(binary, p) for p in (0.1, 0.12, 0.55, 0.58)]
    bins = grid_binning(forecasts, width=0.1)
    assert check_delta_local(bins, forecasts, delta=0.05)
    assert not check_delta_local(PureBinning(("all",) * 4), forecasts, delta=0.05)
    centers = {label: from_scalar(binary, 0.9) for label in bins.counts()}
    assert not check_delta_local(bins, forecasts, delta=0.05, centers=centers)


def test_smoothed_grid_binning_is_fractional(binary):
    forecasts = [from_scalar(binary, p) for p in (0.1, 0.4, 0.77)]
    g = smoothed_grid_binning(forecasts, width=0.2)
    assert len(g) == 3
    assert not g.is_pure
    assert sum(g.totals()) == pytest.approx(3.0)
