# Файл: tests/test_acceptance.py
"""
Сквозные проверки на случайных экземплярах: разложение, оценки калибровки,
монотонность, гарантии процедур, регрет и средние по строкам и столбцам.

Короткие варианты запускаются всегда; полные объемы помечены slow.
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from src.calibeat_engine.binning import (
    RefinementWitness,
    from_forecasts,
    general_binning,
    joint,
    projection_witness,
    smoothed_grid_binning,
)
from src.calibeat_engine.decision import make_utility, regret, swap_vs_forecast_regret, threshold_utility, utility_gain_check
from src.calibeat_engine.procedures import (
    AdversarySpec,
    ReferenceSpec,
    example1_spherical_gap,
    make_grid,
    reference_sequence,
    replay_example_1,
    replay_step_failure,
    run_procedure,
)
from src.calibeat_engine.rowcol import (
    average_inequality_check,
    case_b_gap,
    counterexample_weights,
    frequency_scenario,
    functionals,
    quadratic_functional,
    quadratic_transfer_check,
    rows_outside_hull,
    uniform_weights,
    weighted_matrix,
)
from src.calibeat_engine.scores import (
    brier,
    calibration,
    calibration_bound_check,
    calibration_monotonicity_check,
    decomposition_check,
    delta_decomposition_check,
    online_offline_identity,
    online_refinement,
    reference_binning,
    refinement,
    refinement_monotonicity_check,
    steep_rule_gap_demo,
)
from src.calibeat_engine.scoring import make_step_rule, rule_from_id
from src.calibeat_engine.simplex import ActionSet, dist_new, from_scalar
from src.data_io.client import TranscriptClient

TOL = 1e-10
TERNARY = ActionSet(("a", "b", "c"))


def _lattice_forecasts(rng, action_set, t, n=6, palette=5):
    """Прогнозы из небольшой палитры точек решетки {i/n}: корзины повторяются."""
    points = [
        dist_new(action_set, [Fraction(int(i), n) for i in rng.multinomial(n, np.ones(action_set.size) / action_set.size)], exact=True)
        for _ in range(palette)
    ]
    return [points[i] for i in rng.integers(palette, size=t)]


def _actions(rng, action_set, t):
    return [action_set.labels[i] for i in rng.integers(action_set.size, size=t)]


def _catalog(action_set):
    utilities = {"threshold": threshold_utility(action_set)}
    ids = ["quadratic", "spherical:2", "power:3", "induced:threshold"]
    if action_set.size == 2:
        ids.append("step")
    return [rule_from_id(action_set, rid, utilities) for rid in ids]


# --- Таблица из 10 периодов ---

@pytest.mark.parametrize("m", [1, 2, 5])
def test_example1_scores_survive_periodic_extension(m):
    transcript = replay_example_1(m)
    quadratic = rule_from_id(transcript.action_set, "quadratic")
    b = reference_binning(transcript.reference)
    assert brier(quadratic, transcript.actions, transcript.forecasts) == Fraction(3, 10)
    assert refinement(quadratic, transcript.actions, b, exact=True) == Fraction(8, 25)
    B, R = example1_spherical_gap(2.0, m)
    assert B == pytest.approx(0.6 * (1 - 1 / math.sqrt(2)), abs=1e-9)
    assert R == pytest.approx(1 - math.sqrt(0.68), abs=1e-9)
    assert B > R


# --- Разложение ---

def _decomposition_instances(count, seed):
    rng = np.random.default_rng(seed)
    for n in range(count):
        action_set = ActionSet.binary() if n % 2 == 0 else TERNARY
        t = int(rng.integers(1, 201))
        forecasts = _lattice_forecasts(rng, action_set, t)
        actions = _actions(rng, action_set, t)
        labels = tuple(int(v) for v in rng.integers(0, 3, size=t))
        own = from_forecasts(forecasts)
        yield action_set, actions, forecasts, [own, joint(reference_binning(labels), own)]


def _check_decomposition(count, seed):
    for action_set, actions, forecasts, binnings in _decomposition_instances(count, seed):
        for rule in _catalog(action_set):
            for binning in binnings:
                residual = decomposition_check(rule, actions, forecasts, binning)
                if rule.exact_capable:
                    assert residual == 0
                else:
                    assert abs(float(residual)) <= TOL


def test_decomposition_on_random_instances():
    _check_decomposition(40, seed=11)


@pytest.mark.slow
def test_decomposition_on_many_random_instances():
    _check_decomposition(500, seed=12)


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.2])
def test_delta_local_decomposition_on_random_instances(binary, delta):
    rng = np.random.default_rng(int(delta * 100))
    rule = rule_from_id(binary, "spherical:2")
    for _ in range(20):
        t = int(rng.integers(20, 200))
        p = rng.uniform(0, 1, size=t)
        forecasts = [from_scalar(binary, v) for v in p]
        actions = ["1" if u < v else "0" for u, v in zip(rng.uniform(size=t), p)]
        f = smoothed_grid_binning(forecasts, width=delta / 2, share=float(rng.uniform(0.2, 0.8)))
        residual, bound = delta_decomposition_check(rule, actions, forecasts, f, delta)
        assert abs(residual) < bound


# --- Оценки калибровки и монотонность ---

def test_calibration_bounds_on_random_triples():
    for action_set, actions, forecasts, binnings in _decomposition_instances(30, seed=21):
        for rule in _catalog(action_set):
            if rule.declared_bound is None and rule.declared_lipschitz is None:
                continue
            for binning in binnings:
                assert calibration_bound_check(rule, actions, forecasts, binning)[2]


def test_monotonicity_chains_with_fractional_bins(binary, quadratic, spherical2):
    rng = np.random.default_rng(31)
    for _ in range(30):
        t = int(rng.integers(5, 60))
        actions = _actions(rng, binary, t)
        forecasts = _lattice_forecasts(rng, binary, t, n=4, palette=3)

        shares = [Fraction(int(k), 4) for k in rng.integers(0, 5, size=t)]
        fine_maps = [
            {(0, "x"): s * Fraction(1, 2), (0, "y"): s * Fraction(1, 2), (1, "x"): 1 - s}
            for s in shares
        ]
        coarse_maps = [{0: s, 1: 1 - s} for s in shares]
        fine, coarse = general_binning(fine_maps, exact=True), general_binning(coarse_maps, exact=True)
        witness = RefinementWitness({(0, "x"): 0, (0, "y"): 0, (1, "x"): 1})
        for rule in (quadratic, spherical2):
            assert refinement_monotonicity_check(rule, actions, fine, coarse, witness)

        mid = joint(from_forecasts(forecasts), reference_binning(tuple(int(v) for v in rng.integers(0, 2, size=t))))
        finer = joint(mid, reference_binning(tuple(int(v) for v in rng.integers(0, 3, size=t))))
        assert calibration_monotonicity_check(spherical2, actions, forecasts, finer, mid, projection_witness(finer, 0))


# --- Процедуры ---

def _simple_bound_holds(horizons):
    binary = ActionSet.binary()
    rules = [rule_from_id(binary, rid) for rid in ("quadratic@lipschitz", "spherical:2@lipschitz", "power:3@lipschitz")]
    horizon = max(horizons)
    for bins in (2, 5):
        refs = [reference_sequence(ReferenceSpec("cyclic", bins), binary, horizon, np.random.default_rng(bins))]
        for strategy in ("flip_farthest", "pattern", "stochastic"):
            run = run_procedure("simple", binary, horizon, refs, AdversarySpec(strategy), seed=bins)
            for t in horizons:
                b = reference_binning(run.reference[:t])
                for rule in rules:
                    gap = float(brier(rule, run.actions[:t], run.forecasts[:t])) - float(refinement(rule, run.actions[:t], b))
                    assert -TOL <= gap <= 2 * bins * (math.log(t) + 1) / t + TOL


def test_simple_procedure_bound():
    _simple_bound_holds([100, 1000, 10_000])


@pytest.mark.slow
def test_simple_procedure_bound_long_horizon():
    _simple_bound_holds([100_000])


def test_step_rule_gap_persists():
    step = make_step_rule(ActionSet.binary())
    run = replay_step_failure(160)
    for t in range(100, 161):
        B = brier(step, run.actions[:t], run.forecasts[:t])
        R = refinement(step, run.actions[:t], reference_binning(run.reference[:t]), exact=True)
        assert B == 1
        assert B - R >= Fraction(2, 5)
        if t % 2 == 0:
            assert abs(R - Fraction(1, 2)) <= Fraction(1, t)


def test_online_offline_identity_on_random_bins(binary, quadratic):
    rng = np.random.default_rng(41)
    for _ in range(30):
        actions = _actions(rng, binary, int(rng.integers(1, 101)))
        seed = from_scalar(binary, Fraction(int(rng.integers(0, 5)), 4))
        gap, rhs = online_offline_identity(quadratic, actions, seed_forecast=seed, exact=True)
        assert gap == rhs
        report = online_refinement(quadratic, actions, reference_binning(("bin",) * len(actions)))
        assert report.gap <= report.bound + TOL
    demo = steep_rule_gap_demo(40)
    assert demo.average >= Fraction(38, 40)


def _grid_contract(seeds, horizon, delta=0.1, bins=2):
    binary = ActionSet.binary()
    grid_size = make_grid(binary, delta).points.shape[0]
    quadratic = rule_from_id(binary, "quadratic")
    bounded = [rule_from_id(binary, rid) for rid in ("quadratic@bounded", "spherical:2@bounded")]
    k_values, gaps = [], []
    for seed in seeds:
        refs = [reference_sequence(ReferenceSpec("random", bins), binary, horizon, np.random.default_rng(seed))]
        run = run_procedure("grid", binary, horizon, refs, AdversarySpec("flip_farthest"), seed=seed, delta=delta)
        b = reference_binning(run.reference)
        k = float(calibration(quadratic, run.actions, run.forecasts, joint(b, from_forecasts(run.forecasts))))
        k_values.append(k)
        for rule in bounded:
            gap = float(brier(rule, run.actions, run.forecasts)) - float(refinement(rule, run.actions, b))
            assert gap <= math.sqrt(k) + TOL
            gaps.append(gap)
    bound = delta ** 2 + 2 * bins * grid_size * (math.log(horizon) + 1) / horizon
    assert np.mean(k_values) <= bound
    assert np.mean(gaps) <= math.sqrt(bound)


def test_grid_forecaster_contract():
    _grid_contract(seeds=range(3), horizon=2000)


@pytest.mark.slow
def test_grid_forecaster_contract_thirty_seeds():
    _grid_contract(seeds=range(30), horizon=10_000)


# --- Регрет ---

def test_regret_equals_calibration_on_random_instances(binary):
    rng = np.random.default_rng(51)
    for _ in range(40):
        decisions = [f"x{i}" for i in range(int(rng.integers(2, 5)))]
        payoffs = rng.integers(-3, 4, size=(2, len(decisions))).tolist()
        u = make_utility(binary, decisions, payoffs, tie_rule=("lowest", "highest")[int(rng.integers(2))])
        t = int(rng.integers(5, 80))
        forecasts = _lattice_forecasts(rng, binary, t, n=8, palette=4)
        actions = _actions(rng, binary, t)
        labels = tuple(int(v) for v in rng.integers(0, 2, size=t))
        binning = joint(from_forecasts(forecasts), reference_binning(labels))
        report = regret(u, actions, forecasts, binning)
        assert abs(report.residual) <= 1e-9
        if report.brute_force_utility is not None:
            assert report.brute_force_utility == report.best_remap_utility
        reference = _lattice_forecasts(rng, binary, t, n=8, palette=2)
        gain = utility_gain_check(u, actions, reference, forecasts, joint(reference_binning(reference), from_forecasts(forecasts)))
        assert abs(gain["residual"]) <= 1e-9


def test_forecast_regret_stronger_than_swap_regret(binary):
    forecasts = [from_scalar(binary, Fraction(1, 5))] * 2 + [from_scalar(binary, Fraction(2, 5))] * 2
    actions = ["1", "1", "0", "0"]
    swap, forecast = swap_vs_forecast_regret(threshold_utility(binary), actions, forecasts)
    assert swap == 0
    assert forecast == Fraction(1, 2)


# --- Средние по строкам и столбцам ---

def _average_inequalities(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        X = rng.random(shape + (int(rng.integers(1, 3)),))
        W = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
        report = average_inequality_check(weighted_matrix(X, W))
        assert report.c_ge_e and report.r_ge_e and report.consistent


def test_average_inequalities_on_sampled_matrices():
    _average_inequalities(300, seed=61)


@pytest.mark.slow
def test_average_inequalities_on_many_sampled_matrices():
    _average_inequalities(10_000, seed=62)


@pytest.mark.parametrize("tenths", range(1, 10))
def test_case_b_closed_form(tenths):
    delta = Fraction(tenths, 10)
    wm = counterexample_weights([[0, 1], [1 - delta, Fraction(1, 2)]])
    E, R, C = functionals(wm, quadratic_functional())
    assert R - C == case_b_gap(delta)
    float_wm = counterexample_weights([[0.0, 1.0], [1 - float(delta), 0.5]])
    _, R_f, C_f = functionals(float_wm, quadratic_functional())
    assert abs((R_f - C_f) - float(case_b_gap(delta))) <= 1e-12


def test_identity_matrix_values():
    wm = weighted_matrix([[1, 0], [0, 1]], uniform_weights((2, 2), exact=True))
    assert functionals(wm, quadratic_functional()) == (Fraction(-1, 2), Fraction(-1, 4), Fraction(-1, 4))


def test_counterexamples_for_random_two_by_two():
    rng = np.random.default_rng(71)
    for _ in range(50):
        values = [Fraction(int(v), 20) for v in rng.choice(21, size=3, replace=False)]
        values.append(values[int(rng.integers(3))] if rng.random() < 0.5 else Fraction(int(rng.integers(21)), 20))
        order = rng.permutation(4)
        X = [[values[order[0]], values[order[1]]], [values[order[2]], values[order[3]]]]
        wm = counterexample_weights(X)
        E, R, C = functionals(wm, quadratic_functional())
        assert C <= R
        assert C != E
        assert rows_outside_hull(wm)


def _column_constant_search(trials):
    rng = np.random.default_rng(81)
    row = rng.random(4).tolist()
    verdict = quadratic_transfer_check([row, row, row], trials=trials, seed=3)
    assert verdict.u1_violations == 0
    assert verdict.consistent


def test_column_constant_matrix_never_violates():
    _column_constant_search(300)


@pytest.mark.slow
def test_column_constant_matrix_never_violates_long_search():
    _column_constant_search(10_000)


def test_bundled_sweep_realizes_equivalence():
    scenario = TranscriptClient().load_appendix_scenario("appendix/nondegenerate.json")
    rules = [rule_from_id(scenario.action_set, rid) for rid in scenario.rules]
    report = frequency_scenario(scenario.action_averages, scenario.frequencies, rules, sweep_trials=200, seed=scenario.seed)
    summary = report.sweep_summary
    assert summary["calibeat_without_joint"] > 0
    assert summary["calibeat_without_proper"] > 0
    assert summary["equivalence_holds"]
