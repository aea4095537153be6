# Файл: src/calibeat_engine/scores.py
"""
Модуль оценок последовательностей прогнозов.

Brier B_t^L, калибровка K_t^L, разрешающая способность (refinement) R_t^L,
средняя энтропия H_t^L и онлайн-refinement R̃_t^L, а также исполняемые
проверки разложения B = K + R и оценок на эти величины.

Все величины вычисляются за один проход по разреженному представлению
разбиения: суммы по корзинам копятся через np.add.at, после чего
значения ā_t(i) и c̄_t(i) фиксируются на горизонте t. Рациональный
режим включается, когда правило его поддерживает, а прогнозы (или
действия) заданы дробями: тогда результаты имеют тип Fraction.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np

from config import BOUND_TOLERANCE, SCORE_TOLERANCE
from .binning import (
    GeneralBinning,
    PureBinning,
    RefinementWitness,
    as_general,
    check_delta_local,
    check_refines,
    from_forecasts,
    is_forecast_measurable,
    joint,
    supported_entries,
)
from .errors import EmptySequence, LengthMismatch, MissingConstant, NotARefinement, NotDeltaLocal
from .scoring import (
    ScoringRule,
    divergence_rows,
    entropy_rows,
    make_power,
    make_quadratic,
    scale_rule,
)
from .simplex import ActionSet, Dist, action_matrix, barycenter, compensated_sum, stack, to_fraction

Binning = PureBinning | GeneralBinning


# --- Внутренние помощники ---

def _value(x):
    """Итоговое значение оценки: Fraction в точном режиме, иначе float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return float(x)


def _zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        arr = np.empty(shape, dtype=object)
        arr.fill(Fraction(0))
        return arr
    return np.zeros(shape)


def _has_exact_actions(actions: Sequence) -> bool:
    return any(isinstance(a, Dist) and a.exact for a in actions)


def _forecast_matrix(rule: ScoringRule, forecasts: Sequence[Dist]) -> np.ndarray:
    C = stack(forecasts)
    if C.dtype == object and not rule.exact_capable:
        return C.astype(float)
    return C


def _actions(rule: ScoringRule, actions: Sequence, exact: bool) -> np.ndarray:
    items = list(actions)
    if not items:
        raise EmptySequence("Пустая последовательность действий")
    return action_matrix(rule.action_set, items, exact=exact and rule.exact_capable)


def _paired(rule: ScoringRule, actions: Sequence, forecasts: Sequence[Dist]) -> tuple[np.ndarray, np.ndarray]:
    """Матрицы действий и прогнозов в общем арифметическом режиме."""
    actions, forecasts = list(actions), list(forecasts)
    if not actions or not forecasts:
        raise EmptySequence("Пустая последовательность действий или прогнозов")
    if len(actions) != len(forecasts):
        raise LengthMismatch(f"Действий {len(actions)}, прогнозов {len(forecasts)}")
    C = _forecast_matrix(rule, forecasts)
    A = _actions(rule, actions, exact=C.dtype == object)
    if A.dtype == object and C.dtype != object:
        A = A.astype(float)
    return A, C


def _mean(values: np.ndarray, t: int):
    return compensated_sum(values) / t


@dataclass(frozen=True)
class BinSummary:
    """
    Итоги по корзинам на горизонте t.

    Attributes:
        labels (tuple): Идентификаторы корзин.
        counts (np.ndarray): n_t(i).
        action_avg (np.ndarray): ā_t(i) построчно (для пустых корзин - нули).
        forecast_avg (np.ndarray | None): c̄_t(i) построчно.
        active (np.ndarray): Маска корзин с n_t(i) > 0.
        t (int): Горизонт.
    """
    labels: tuple
    counts: np.ndarray
    action_avg: np.ndarray
    forecast_avg: np.ndarray | None
    active: np.ndarray
    t: int


def bin_summary(binning: Binning, A: np.ndarray, C: np.ndarray | None = None) -> BinSummary:
    """
    Считает n_t(i), ā_t(i) и (при наличии прогнозов) c̄_t(i).

    Raises:
        LengthMismatch: Длина разбиения не совпадает с числом периодов.
    """
    g = as_general(binning)
    if len(g) != A.shape[0]:
        raise LengthMismatch(f"Длина разбиения {len(g)} != числу периодов {A.shape[0]}")
    exact = A.dtype == object
    weights = g.weights
    if exact and weights.dtype != object:
        weights = np.array([to_fraction(w) for w in weights.tolist()], dtype=object)
    elif not exact:
        weights = np.asarray(weights, dtype=float)

    size = len(g.labels)
    counts = _zeros(size, exact)
    np.add.at(counts, g.codes, weights)
    active = np.array([n > 0 for n in counts.tolist()], dtype=bool)
    safe = np.where(active, counts, 1)

    def averages(M: np.ndarray) -> np.ndarray:
        sums = _zeros((size, M.shape[1]), exact)
        np.add.at(sums, g.codes, weights[:, None] * M[g.periods])
        return sums / safe[:, None]

    forecast_avg = None
    if C is not None:
        forecast_avg = averages(C.astype(object) if exact and C.dtype != object else C)
    return BinSummary(g.labels, counts, averages(A), forecast_avg, active, g.length)


# --- Оценки ---

def brier(rule: ScoringRule, actions: Sequence, forecasts: Sequence[Dist]):
    """
    Brier-оценка B_t^L(c) = (1/t) Σ D^L(a_s, c_s).

    Raises:
        LengthMismatch: Длины последовательностей различаются.
        EmptySequence: t = 0.
    """
    A, C = _paired(rule, actions, forecasts)
    return _value(_mean(divergence_rows(rule, A, C), A.shape[0]))


def avg_entropy(rule: ScoringRule, actions: Sequence, exact: bool | None = None):
    """
    Средняя энтропия реализованных действий H_t^L = (1/t) Σ H^L(a_s).

    Raises:
        EmptySequence: t = 0.
    """
    actions = list(actions)
    if exact is None:
        exact = _has_exact_actions(actions)
    A = _actions(rule, actions, exact=bool(exact))
    return _value(_mean(entropy_rows(rule, A), A.shape[0]))


def calibration(rule: ScoringRule, actions: Sequence, forecasts: Sequence[Dist], binning: Binning):
    """
    Калибровка K_t^L(c; f) = (1/t) Σ_i n_t(i) D^L(ā_t(i), c̄_t(i)).

    Пустые корзины (n_t(i) = 0) вклада не дают.

    Raises:
        LengthMismatch: Длины последовательностей различаются.
        EmptySequence: t = 0.
    """
    A, C = _paired(rule, actions, forecasts)
    summary = bin_summary(binning, A, C)
    mask = summary.active
    D = divergence_rows(rule, summary.action_avg[mask], summary.forecast_avg[mask])
    return _value(_mean(summary.counts[mask] * D, summary.t))


def _refinement_parts(rule: ScoringRule, actions: Sequence, binning: Binning, exact: bool | None):
    actions = list(actions)
    g = as_general(binning)
    if exact is None:
        exact = _has_exact_actions(actions) or g.weights.dtype == object
    A = _actions(rule, actions, exact=bool(exact))
    summary = bin_summary(g, A)
    return A, g, summary


def refinement(rule: ScoringRule, actions: Sequence, binning: Binning, exact: bool | None = None):
    """
    Refinement R_t^L(f) = (1/t) Σ_i Σ_s f_s(i) D^L(a_s, ā_t(i)).

    Args:
        exact (bool | None): Рациональный режим. По умолчанию включается,
            если действия или веса разбиения заданы дробями.

    Raises:
        LengthMismatch: Длина разбиения не совпадает с числом действий.
        EmptySequence: t = 0.
    """
    A, g, summary = _refinement_parts(rule, actions, binning, exact)
    periods, codes, weights = supported_entries(g)
    if A.dtype != object:
        weights = np.asarray(weights, dtype=float)
    D = divergence_rows(rule, A[periods], summary.action_avg[codes])
    return _value(_mean(weights * D, summary.t))


def refinement_entropy_form(rule: ScoringRule, actions: Sequence, binning: Binning, exact: bool | None = None):
    """Энтропийная форма: Σ_i (n_t(i)/t) H^L(ā_t(i)) − H_t^L."""
    A, _, summary = _refinement_parts(rule, actions, binning, exact)
    mask = summary.active
    H_bins = entropy_rows(rule, summary.action_avg[mask])
    H_actions = entropy_rows(rule, A)
    t = summary.t
    return _value(_mean(summary.counts[mask] * H_bins, t) - _mean(H_actions, t))


def _require_forecast_refining(binning: Binning, forecasts: Sequence[Dist]) -> None:
    g = as_general(binning)
    if not g.is_pure or not is_forecast_measurable(g, forecasts):
        raise NotARefinement("Разбиение должно быть чистым и измельчать прогнозы (i_s = i_r ⇒ c_s = c_r)")


def decomposition_check(rule: ScoringRule, actions: Sequence, forecasts: Sequence[Dist], binning: Binning):
    """
    Невязка разложения B_t^L(c) − K_t^L(c; i) − R_t^L(i).

    Raises:
        NotARefinement: Разбиение не чистое или не измельчает прогнозы.
    """
    _require_forecast_refining(binning, forecasts)
    exact = stack(forecasts).dtype == object and rule.exact_capable
    return _value(
        brier(rule, actions, forecasts)
        - calibration(rule, actions, forecasts, binning)
        - refinement(rule, actions, binning, exact=exact)
    )


def delta_decomposition_check(
    rule: ScoringRule,
    actions: Sequence,
    forecasts: Sequence[Dist],
    f: Binning,
    delta: float,
) -> tuple[float, float]:
    """
    Разложение для δ-локального общего разбиения: |B − (K + R)| < 2·M_L·δ.

    Returns:
        tuple[float, float]: (невязка, граница 2·M_L·δ).

    Raises:
        MissingConstant: У правила нет константы Липшица.
        NotDeltaLocal: Разбиение не δ-локально относительно прогнозов.
    """
    if rule.declared_lipschitz is None:
        raise MissingConstant(f"Правило '{rule.name}' не объявлено липшицевым")
    if not check_delta_local(f, forecasts, delta):
        raise NotDeltaLocal(f"Разбиение не является {delta}-локальным")
    residual = (
        brier(rule, actions, forecasts)
        - calibration(rule, actions, forecasts, f)
        - refinement(rule, actions, f, exact=False)
    )
    return float(residual), 2 * rule.declared_lipschitz * delta


# --- Онлайн-refinement ---

@dataclass(frozen=True)
class OnlineRefinementReport:
    """
    Сравнение онлайн- и офлайн-refinement.

    bound = 2M(N_t/t)(ln(t/N_t)+1) объявляется только для липшицевых правил.
    """
    online_refinement: float | Fraction
    offline_refinement: float | Fraction
    gap: float | Fraction
    bound: float | None
    bins_used: int
    t: int


def prior_averages(A: np.ndarray, codes: np.ndarray, seed_row: np.ndarray) -> np.ndarray:
    """
    ā_{s−1}(i_s): среднее действий прошлых посещений корзины i_s,
    для первого посещения - seed_row.
    """
    t = A.shape[0]
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    sorted_A = A[order]
    exclusive = np.cumsum(sorted_A, axis=0) - sorted_A
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_codes)) + 1]
    group = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, t]))
    prior_sums = exclusive - exclusive[starts[group]]
    rank = np.arange(t) - starts[group]
    averages = prior_sums / np.where(rank > 0, rank, 1)[:, None]
    averages[rank == 0] = seed_row
    result = np.empty_like(averages)
    result[order] = averages
    return result


def online_refinement(
    rule: ScoringRule,
    actions: Sequence,
    binning: PureBinning,
    seed_forecast: Dist | None = None,
    exact: bool | None = None,
) -> OnlineRefinementReport:
    """
    Онлайн-refinement R̃_t^L = (1/t) Σ D(a_s, ā_{s−1}(i_s)) и его разрыв
    с офлайн-значением R_t^L.

    Args:
        seed_forecast (Dist | None): Значение ā_0(i) при первом посещении
            корзины (по умолчанию центр симплекса).

    Raises:
        EmptySequence: t = 0.
    """
    actions = list(actions)
    if exact is None:
        exact = _has_exact_actions(actions) or bool(seed_forecast is not None and seed_forecast.exact)
    A = _actions(rule, actions, exact=bool(exact))
    if len(binning) != A.shape[0]:
        raise LengthMismatch(f"Длина разбиения {len(binning)} != числу действий {A.shape[0]}")
    seed = seed_forecast or barycenter(rule.action_set, exact=A.dtype == object)
    seed_row = seed.weights.astype(A.dtype) if A.dtype != object else np.array(
        [to_fraction(w) for w in seed.weights.tolist()], dtype=object
    )
    codes, labels = binning.codes()
    t = A.shape[0]

    prior = prior_averages(A, codes, seed_row)
    online = _value(_mean(divergence_rows(rule, A, prior), t))
    offline = refinement(rule, actions, binning, exact=A.dtype == object)

    bins_used = len(labels)
    bound = None
    if rule.declared_lipschitz is not None:
        bound = 2 * rule.declared_lipschitz * (bins_used / t) * (math.log(t / bins_used) + 1)
    return OnlineRefinementReport(online, offline, _value(online - offline), bound, bins_used, t)


def online_offline_identity(rule: ScoringRule, actions: Sequence, seed_forecast: Dist | None = None, exact: bool | None = None):
    """
    Тождество для одной корзины: ṽ_n − v_n = (1/n) Σ_{j≥1} j·D(x̄_j, x̄_{j−1}),
    где x̄_0 - затравочный прогноз.

    Returns:
        tuple: (ṽ_n − v_n, правая часть).
    """
    actions = list(actions)
    n = len(actions)
    report = online_refinement(rule, actions, PureBinning(("bin",) * n), seed_forecast, exact)
    if exact is None:
        exact = _has_exact_actions(actions) or bool(seed_forecast is not None and seed_forecast.exact)
    A = _actions(rule, actions, exact=bool(exact))
    seed = seed_forecast or barycenter(rule.action_set, exact=A.dtype == object)
    seed_row = np.array([to_fraction(w) for w in seed.weights.tolist()], dtype=object) if A.dtype == object else seed.weights

    steps = np.arange(1, n + 1)
    means = np.cumsum(A, axis=0) / steps[:, None]
    previous = np.vstack([seed_row[None, :], means[:-1]])
    rhs = _mean(steps * divergence_rows(rule, means, previous), n)
    return report.gap, _value(rhs)


@dataclass(frozen=True)
class SteepGapReport:
    """Отдельные слагаемые η_j и итог демонстрации для крутого правила."""
    etas: list
    closed_form: list
    average: Fraction
    lower_bound: Fraction


def steep_rule_gap_demo(n: int) -> SteepGapReport:
    """
    Разрыв онлайн/офлайн для степенного правила α = −1 (с множителем
    α(α−1) = 2) на одной корзине и действиях x_1 = (1,0), x_j = (0,1).

    Слагаемые η_j = j·D(x̄_j, x̄_{j−1}) считаются с j = 3 (первые два
    периода заполняют корзину) и точно равны 1 + 1/((j−1)(j−2)²),
    поэтому (1/n) Σ η_j ≥ (n−2)/n.
    """
    if n < 3:
        raise EmptySequence("Демонстрация требует n ≥ 3")
    action_set = ActionSet.binary()
    rule = scale_rule(make_power(action_set, -1), 2, name="power:-1*2")
    j = np.arange(2, n + 1)
    means = np.empty((j.size, 2), dtype=object)
    means[:, 0] = [Fraction(1, int(v)) for v in j]
    means[:, 1] = [Fraction(int(v) - 1, int(v)) for v in j]
    etas = (j[1:] * divergence_rows(rule, means[1:], means[:-1])).tolist()
    closed = [1 + Fraction(1, (int(v) - 1) * (int(v) - 2) ** 2) for v in j[1:]]
    return SteepGapReport(etas, closed, sum(etas, Fraction(0)) / n, Fraction(n - 2, n))


# --- Проверки оценок ---

def calibration_bound_check(rule: ScoringRule, actions: Sequence, forecasts: Sequence[Dist], binning: Binning):
    """
    Оценки калибровки через квадратичную: K^L ≤ M_b·√K и K^L ≤ M_L·K.

    Returns:
        tuple: (K^L, K квадратичного правила, выполняются ли оценки).

    Raises:
        MissingConstant: У правила не объявлено ни одной константы.
    """
    if rule.declared_bound is None and rule.declared_lipschitz is None:
        raise MissingConstant(f"У правила '{rule.name}' нет объявленных констант")
    k_rule = calibration(rule, actions, forecasts, binning)
    k_quad = calibration(make_quadratic(rule.action_set), actions, forecasts, binning)
    holds = True
    if rule.declared_bound is not None:
        holds &= float(k_rule) <= rule.declared_bound * math.sqrt(max(float(k_quad), 0.0)) + BOUND_TOLERANCE
    if rule.declared_lipschitz is not None:
        holds &= float(k_rule) <= rule.declared_lipschitz * float(k_quad) + BOUND_TOLERANCE
    return k_rule, k_quad, bool(holds)


def refinement_monotonicity_check(
    rule: ScoringRule,
    actions: Sequence,
    fine: Binning,
    coarse: Binning,
    witness: RefinementWitness,
) -> bool:
    """
    R^L(fine) ≤ R^L(coarse): измельчение не ухудшает refinement.

    Raises:
        NotARefinement: witness не подтверждает измельчение.
    """
    if not check_refines(fine, coarse, witness):
        raise NotARefinement("Мелкое разбиение не измельчает крупное при данном отображении")
    return bool(float(refinement(rule, actions, fine)) <= float(refinement(rule, actions, coarse)) + SCORE_TOLERANCE)


def calibration_monotonicity_check(
    rule: ScoringRule,
    actions: Sequence,
    forecasts: Sequence[Dist],
    fine: Binning,
    mid: Binning,
    witness: RefinementWitness,
) -> bool:
    """
    Цепочка K^L(c; fine) ≥ K^L(c; mid) ≥ K^L(c) для разбиений,
    измельчающих прогнозы.

    Raises:
        NotARefinement: fine не измельчает mid или mid не измельчает прогнозы.
    """
    if not check_refines(fine, mid, witness):
        raise NotARefinement("fine не измельчает mid при данном отображении")
    if not is_forecast_measurable(mid, forecasts):
        raise NotARefinement("Разбиение mid не измельчает прогнозы")
    k_fine = float(calibration(rule, actions, forecasts, fine))
    k_mid = float(calibration(rule, actions, forecasts, mid))
    k_own = float(calibration(rule, actions, forecasts, from_forecasts(forecasts)))
    return k_fine >= k_mid - SCORE_TOLERANCE and k_mid >= k_own - SCORE_TOLERANCE


def reference_binning(reference: Sequence) -> PureBinning:
    """Разбиение по эталонному прогнозу: Dist - по значению, иначе метка как есть."""
    items = list(reference)
    if items and all(isinstance(b, Dist) for b in items):
        return from_forecasts(items)
    return PureBinning(tuple(b.key() if isinstance(b, Dist) else b for b in items))


def joint_calibeating_check(
    rules: Sequence[ScoringRule],
    actions: Sequence,
    reference: Sequence,
    forecasts: Sequence[Dist],
    tolerance: float = SCORE_TOLERANCE,
) -> dict[str, dict[str, bool]]:
    """
    Равносильные формы калибитинга совместного разбиения b×c:
    J1: B(c) ≤ R(b×c), J2: K(c; b×c) = 0 (квадратичное правило),
    J3: K^L(c; b×c) = 0, J4: B^L(c) ≤ R^L(b×c).

    Returns:
        dict: Для каждого правила флаги J1..J4 и признак их согласия.
    """
    forecasts = list(forecasts)
    joint_bins = joint(reference_binning(reference), from_forecasts(forecasts))
    quadratic = make_quadratic(forecasts[0].action_set)
    j1 = float(brier(quadratic, actions, forecasts)) <= float(refinement(quadratic, actions, joint_bins)) + tolerance
    j2 = float(calibration(quadratic, actions, forecasts, joint_bins)) <= tolerance

    result = {}
    for rule in rules:
        j3 = float(calibration(rule, actions, forecasts, joint_bins)) <= tolerance
        j4 = float(brier(rule, actions, forecasts)) <= float(refinement(rule, actions, joint_bins)) + tolerance
        result[rule.name] = {"J1": j1, "J2": j2, "J3": j3, "J4": j4, "consistent": j1 == j2 == j3 == j4}
    return result


# --- Отчет ---

def _serializable(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _serializable(v) for k, v in value.items()}
    return value


@dataclass
class ScoreReport:
    """
    Сводка оценок одного правила на одном транскрипте.

    Значения calibration, refinement, decomposition_residual и
    refinement_form_gap заданы для каждого именованного разбиения.
    decomposition_residual заполняется только для чистых разбиений,
    измельчающих прогнозы.
    """
    rule: str
    t: int
    brier: float | Fraction
    avg_entropy: float | Fraction
    calibration: dict = field(default_factory=dict)
    refinement: dict = field(default_factory=dict)
    decomposition_residual: dict = field(default_factory=dict)
    refinement_form_gap: dict = field(default_factory=dict)
    seed: int | None = None
    config_hash: str | None = None

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "t": self.t,
            "brier": _serializable(self.brier),
            "avg_entropy": _serializable(self.avg_entropy),
            "calibration": _serializable(self.calibration),
            "refinement": _serializable(self.refinement),
            "decomposition_residual": _serializable(self.decomposition_residual),
            "refinement_form_gap": _serializable(self.refinement_form_gap),
            "seed": self.seed,
            "config_hash": self.config_hash,
        }

    def csv_rows(self) -> list[dict]:
        """По строке на разбиение: (t, rule, binning, B, K, R)."""
        return [
            {
                "t": self.t,
                "rule": self.rule,
                "binning": name,
                "B": float(self.brier),
                "K": float(self.calibration[name]),
                "R": float(self.refinement[name]),
            }
            for name in self.calibration
        ]


def score_report(
    rule: ScoringRule,
    actions: Sequence,
    forecasts: Sequence[Dist],
    binnings: Mapping[Hashable, Binning],
    seed: int | None = None,
    config_hash: str | None = None,
) -> ScoreReport:
    """Считает все оценки правила для набора именованных разбиений."""
    actions, forecasts = list(actions), list(forecasts)
    exact = stack(forecasts).dtype == object and rule.exact_capable
    report = ScoreReport(
        rule=rule.name,
        t=len(actions),
        brier=brier(rule, actions, forecasts),
        avg_entropy=avg_entropy(rule, actions, exact=exact),
        seed=seed,
        config_hash=config_hash,
    )
    for name, binning in binnings.items():
        report.calibration[name] = calibration(rule, actions, forecasts, binning)
        report.refinement[name] = refinement(rule, actions, binning, exact=exact)
        report.refinement_form_gap[name] = _value(
            report.refinement[name] - refinement_entropy_form(rule, actions, binning, exact=exact)
        )
        g = as_general(binning)
        if g.is_pure and is_forecast_measurable(g, forecasts):
            report.decomposition_residual[name] = _value(
                report.brier - report.calibration[name] - report.refinement[name]
            )
    return report
