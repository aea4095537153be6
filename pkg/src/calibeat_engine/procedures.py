# Файл: src/calibeat_engine/procedures.py
"""
Модуль процедур прогнозирования.

Содержит простую детерминированную процедуру калибитинга (прогноз -
среднее прошлых действий в текущей корзине эталона b), ее вариант для
нескольких эталонов, стохастический сеточный прогнозист, целящийся
в калибровку совместного разбиения b×c, генераторы действий
"противника" и воспроизведение учебных примеров.

Процедуры последовательны: состояние меняет только один поток, а
независимые прогоны с разными зернами можно выполнять параллельно.
"""
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np
from scipy.optimize import linprog

from config import DEFAULT_SEED, PROPERNESS_SEED
from src.data_io.transcript import Transcript
from src.utils.logger import console
from .errors import GridMissing, LengthMismatch, OptimizerFailure, UnknownProcedure, UnknownStrategy
from .binning import from_forecasts, joint
from .scores import brier, calibration, refinement, reference_binning
from .scoring import ScoringRule, make_quadratic, make_spherical
from .simplex import (
    ActionSet,
    Dist,
    barycenter,
    from_scalar,
    pure,
    quasi_random_points,
    to_fraction,
    trusted_dist,
)


# --- Простая процедура калибитинга ---

@dataclass
class CalibeatState:
    """
    Состояние простой процедуры: суммы действий и счетчики по корзинам.

    Attributes:
        action_set (ActionSet): Множество действий.
        seed_forecast (Dist): Прогноз при первом посещении корзины.
        sums (dict): Корзина -> сумма векторов действий.
        counts (dict): Корзина -> число посещений.
    """
    action_set: ActionSet
    seed_forecast: Dist
    sums: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.seed_forecast.exact


def simple_calibeat_step(state: CalibeatState, b_t: Hashable) -> Dist:
    """
    Прогноз c_t = ā_{t−1}(b_t): среднее прошлых действий корзины b_t;
    при первом посещении - затравочный прогноз.
    """
    n = state.counts.get(b_t, 0)
    if n == 0:
        return state.seed_forecast
    return trusted_dist(state.action_set, state.sums[b_t] / n)


def simple_multicalibeat_step(state: CalibeatState, b_tuple: Sequence[Hashable]) -> Dist:
    """Простая процедура на совместной корзине (b¹_t, …, b^N_t)."""
    return simple_calibeat_step(state, tuple(b_tuple))


def observe(state: CalibeatState, b_t: Hashable, action) -> None:
    """Добавляет раскрытое действие a_t (метку или Dist) в корзину b_t."""
    if b_t not in state.sums:
        zeros = np.zeros(state.action_set.size, dtype=object if state.exact else float)
        if state.exact:
            zeros[:] = Fraction(0)
        state.sums[b_t] = zeros
        state.counts[b_t] = 0
    if isinstance(action, Dist):
        weights = action.weights
        if state.exact:
            weights = np.array([to_fraction(w) for w in weights.tolist()], dtype=object)
        state.sums[b_t] = state.sums[b_t] + weights
    else:
        state.sums[b_t][state.action_set.index(action)] += 1
    state.counts[b_t] += 1


# --- Противник ---

STRATEGIES = ("flip_farthest", "pattern", "stochastic")


@dataclass(frozen=True)
class AdversarySpec:
    """
    Стратегия выбора действий.

    flip_farthest - действие, дальше всего (в среднем по объявленной
    смеси) от прогноза; pattern - периодический шаблон; stochastic -
    независимые действия с вероятностями probabilities.
    """
    strategy: str
    pattern: tuple = ("0", "1")
    probabilities: tuple | None = None


@dataclass(frozen=True)
class AdversaryView:
    """Публичная информация периода: объявленная смесь прогнозов без реализации."""
    period: int
    points: np.ndarray
    weights: np.ndarray


def deterministic_view(period: int, forecast: Dist) -> AdversaryView:
    return AdversaryView(period, np.asarray(forecast.weights, dtype=float)[None, :], np.ones(1))


def adversarial_actions(
    spec: AdversarySpec,
    view: AdversaryView,
    action_set: ActionSet,
    rng: np.random.Generator,
) -> str:
    """
    Действие противника в текущем периоде.

    Raises:
        UnknownStrategy: Неизвестная стратегия.
    """
    if spec.strategy == "flip_farthest":
        # max_a Σ η_i ‖e_a − p_i‖² = min_a Σ η_i p_i(a); ничья - меньший индекс
        mean = view.weights @ view.points
        return action_set.labels[int(np.argmin(mean))]
    if spec.strategy == "pattern":
        return str(spec.pattern[view.period % len(spec.pattern)])
    if spec.strategy == "stochastic":
        p = spec.probabilities or tuple([1.0 / action_set.size] * action_set.size)
        return action_set.labels[int(rng.choice(action_set.size, p=np.asarray(p, dtype=float)))]
    raise UnknownStrategy(f"Неизвестная стратегия противника '{spec.strategy}' (ожидалось: {', '.join(STRATEGIES)})")


# --- Эталонные прогнозы ---

REFERENCE_KINDS = ("constant", "cyclic", "random")


@dataclass(frozen=True)
class ReferenceSpec:
    """Эталон b: вид ("constant" | "cyclic" | "random") и число корзин |B|."""
    kind: str = "cyclic"
    bins: int = 2


def reference_value(action_set: ActionSet, j: int, bins: int, exact: bool = False) -> Dist:
    """Значение прогноза корзины j: смесь центра симплекса и вершины j mod |A|."""
    lam = Fraction(j + 1, bins + 1)
    center = barycenter(action_set, exact=True).weights
    vertex = pure(action_set, action_set.labels[j % action_set.size], exact=True).weights
    weights = (1 - lam) * center + lam * vertex
    if not exact:
        weights = np.asarray(weights, dtype=float)
    return trusted_dist(action_set, weights)


def reference_sequence(
    spec: ReferenceSpec,
    action_set: ActionSet,
    horizon: int,
    rng: np.random.Generator,
    exact: bool = False,
) -> list[Dist]:
    """
    Последовательность эталонных прогнозов b_1..b_t.

    Raises:
        UnknownStrategy: Неизвестный вид эталона.
    """
    if spec.kind == "constant":
        indices = np.zeros(horizon, dtype=np.int64)
    elif spec.kind == "cyclic":
        indices = np.arange(horizon) % spec.bins
    elif spec.kind == "random":
        indices = rng.integers(spec.bins, size=horizon)
    else:
        raise UnknownStrategy(f"Неизвестный вид эталона '{spec.kind}' (ожидалось: {', '.join(REFERENCE_KINDS)})")
    values = [reference_value(action_set, j, spec.bins, exact) for j in range(spec.bins)]
    return [values[j] for j in indices.tolist()]


def _reference_key(b) -> Hashable:
    return b.key() if isinstance(b, Dist) else b


def _reference_label(b) -> str:
    return ",".join(str(w) for w in b.weights.tolist()) if isinstance(b, Dist) else str(b)


def _combined_references(references: Sequence[Sequence], horizon: int) -> tuple[list, list]:
    """Ключи корзин процедуры и значения b_t для записи в транскрипт."""
    references = [list(r) for r in references]
    if any(len(r) < horizon for r in references):
        raise LengthMismatch("Эталон короче горизонта")
    if len(references) == 1:
        stored = references[0][:horizon]
        return [_reference_key(b) for b in stored], stored
    keys = [tuple(_reference_key(r[s]) for r in references) for s in range(horizon)]
    stored = [tuple(_reference_label(r[s]) for r in references) for s in range(horizon)]
    return keys, stored


def run_simple_procedure(
    action_set: ActionSet,
    horizon: int,
    references: Sequence[Sequence],
    adversary: AdversarySpec,
    seed: int = DEFAULT_SEED,
    seed_forecast: Dist | None = None,
    exact: bool = False,
) -> Transcript:
    """
    Прогон простой процедуры (или ее варианта для нескольких эталонов).

    Args:
        references (Sequence[Sequence]): Один или несколько эталонов b^n
            (значения Dist или метки корзин).
        seed_forecast (Dist | None): Прогноз первого посещения корзины.

    Returns:
        Transcript: Действия, эталон и прогнозы процедуры.
    """
    rng = np.random.default_rng(seed)
    keys, stored = _combined_references(references, horizon)
    state = CalibeatState(action_set, seed_forecast or barycenter(action_set, exact=exact))
    actions, forecasts = [], []
    for s, key in enumerate(keys):
        c = simple_calibeat_step(state, key)
        a = adversarial_actions(adversary, deterministic_view(s, c), action_set, rng)
        observe(state, key, a)
        actions.append(a)
        forecasts.append(c)
    return Transcript(action_set, actions, stored, forecasts, exact=state.exact)


# --- Сетка и стохастический прогнозист ---

@dataclass(frozen=True)
class Grid:
    """Конечная δ-сетка C_δ симплекса (решетка с координатами i/n)."""
    action_set: ActionSet
    delta: float
    points: np.ndarray


def lattice_resolution(size: int, delta: float) -> int:
    """Шаг решетки 1/n: n = ⌈1/(√2δ)⌉ при |A|=2 и ⌈√|A|/δ⌉ иначе."""
    if not delta > 0:
        raise GridMissing("delta должно быть положительным")
    if size == 2:
        return max(1, math.ceil(1 / (math.sqrt(2) * delta)))
    return max(1, math.ceil(math.sqrt(size) / delta))


def make_grid(action_set: ActionSet, delta: float) -> Grid:
    """Решетка {i/n} на симплексе: все разбиения n на |A| неотрицательных частей."""
    k = action_set.size
    n = lattice_resolution(k, delta)
    rows = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        edges = (-1,) + bars + (n + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    points = np.asarray(rows, dtype=float) / n
    return Grid(action_set, float(delta), points)


def grid_covers(grid: Grid, samples: int = 2000, seed: int = PROPERNESS_SEED) -> bool:
    """Проверяет покрытие: каждая выборочная точка симплекса в пределах δ от сетки."""
    k = grid.action_set.size
    queries = np.vstack([np.eye(k), quasi_random_points(k, samples, seed)])
    distances = np.linalg.norm(queries[:, None, :] - grid.points[None, :, :], axis=2)
    return bool(np.all(distances.min(axis=1) <= grid.delta))


@dataclass
class GridForecasterState:
    """
    Состояние сеточного прогнозиста: для каждой эталонной корзины b
    и точки сетки p_i - число выборов n_i и сумма действий S_i.
    """
    grid: Grid | None
    counts: dict = field(default_factory=dict)
    sums: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MixedForecast:
    """Объявленная смесь η по точкам сетки и ее реализация."""
    weights: np.ndarray
    index: int
    forecast: Dist


def _bin_tables(state: GridForecasterState, b_t: Hashable) -> tuple[np.ndarray, np.ndarray]:
    G, k = state.grid.points.shape
    if b_t not in state.counts:
        state.counts[b_t] = np.zeros(G)
        state.sums[b_t] = np.zeros((G, k))
    return state.counts[b_t], state.sums[b_t]


def bias_increments(points: np.ndarray, counts: np.ndarray, sums: np.ndarray) -> np.ndarray:
    """
    Ψ[i, a] = n_i/(n_i+1)·(2v_i·(e_a − p_i) − ‖v_i‖²), v_i = ā_i − p_i:
    основная часть приращения n_i‖ā_i − p_i‖² при выборе p_i и действии a.
    Для пустых клеток ā_i = p_i.
    """
    filled = counts > 0
    averages = np.where(filled[:, None], sums / np.maximum(counts, 1)[:, None], points)
    v = averages - points
    share = counts / (counts + 1)
    projection = (v * points).sum(axis=1, keepdims=True)
    return share[:, None] * (2 * (v - projection) - (v * v).sum(axis=1, keepdims=True))


def _two_action_minimax(psi: np.ndarray) -> np.ndarray:
    """Точный минимакс для двух действий: чистые точки и уравнивающие пары."""
    x, y = psi[:, 0], psi[:, 1]
    G = x.size
    pure_values = np.maximum(x, y)
    best = int(np.argmin(pure_values))
    eta = np.zeros(G)
    eta[best] = 1.0
    if G < 2:
        return eta

    i, j = np.triu_indices(G, k=1)
    denominator = (x[i] - y[i]) + (y[j] - x[j])
    valid = np.abs(denominator) > 1e-15
    lam = np.where(valid, (y[j] - x[j]) / np.where(valid, denominator, 1.0), -1.0)
    valid &= (lam >= 0.0) & (lam <= 1.0)
    if not np.any(valid):
        return eta
    values = np.where(valid, lam * x[i] + (1 - lam) * x[j], np.inf)
    pair = int(np.argmin(values))
    if values[pair] < pure_values[best] - 1e-15:
        eta[:] = 0.0
        eta[i[pair]] = lam[pair]
        eta[j[pair]] += 1.0 - lam[pair]
    return eta


def _linprog_minimax(psi: np.ndarray) -> np.ndarray:
    """min_η max_a Σ η_i Ψ[i,a] как линейная программа (переменные η, z)."""
    G, k = psi.shape
    cost = np.r_[np.zeros(G), 1.0]
    A_ub = np.hstack([psi.T, -np.ones((k, 1))])
    A_eq = np.r_[np.ones(G), 0.0][None, :]
    result = linprog(
        cost,
        A_ub=A_ub,
        b_ub=np.zeros(k),
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * G + [(None, None)],
        method="highs",
    )
    if not result.success:
        raise OptimizerFailure(f"Минимакс сеточного прогнозиста не решен: {result.message}")
    eta = np.clip(result.x[:G], 0.0, None)
    return eta / eta.sum()


def grid_mixture(state: GridForecasterState, b_t: Hashable) -> np.ndarray:
    """Смесь η по точкам сетки для корзины b_t, минимизирующая худший рост смещения."""
    if state.grid is None:
        raise GridMissing("Сеточный прогнозист требует заданной δ-сетки")
    counts, sums = _bin_tables(state, b_t)
    psi = bias_increments(state.grid.points, counts, sums)
    if state.grid.action_set.size == 2:
        return _two_action_minimax(psi)
    return _linprog_minimax(psi)


def grid_calibrated_step(state: GridForecasterState, b_t: Hashable, rng: np.random.Generator) -> MixedForecast:
    """
    Объявляет смесь прогнозов по сетке и реализует ее случайным выбором.

    Raises:
        GridMissing: Сетка не задана.
    """
    eta = grid_mixture(state, b_t)
    index = int(rng.choice(eta.size, p=eta))
    return MixedForecast(eta, index, trusted_dist(state.grid.action_set, state.grid.points[index]))


def grid_observe(state: GridForecasterState, b_t: Hashable, index: int, action: str) -> None:
    counts, sums = _bin_tables(state, b_t)
    counts[index] += 1
    sums[index, state.grid.action_set.index(action)] += 1.0


def run_grid_forecaster(
    action_set: ActionSet,
    horizon: int,
    references: Sequence[Sequence],
    adversary: AdversarySpec,
    delta: float,
    seed: int = DEFAULT_SEED,
) -> Transcript:
    """
    Прогон сеточного прогнозиста. Эталонная корзина может быть кортежем
    (b¹_t, …, b^N_t) при нескольких эталонах.
    """
    rng = np.random.default_rng(seed)
    keys, stored = _combined_references(references, horizon)
    state = GridForecasterState(make_grid(action_set, delta))
    actions, forecasts = [], []
    for s, key in enumerate(keys):
        mixed = grid_calibrated_step(state, key, rng)
        view = AdversaryView(s, state.grid.points, mixed.weights)
        a = adversarial_actions(adversary, view, action_set, rng)
        grid_observe(state, key, mixed.index, a)
        actions.append(a)
        forecasts.append(mixed.forecast)
    return Transcript(action_set, actions, stored, forecasts)


PROCEDURES = ("simple", "multi", "grid")


def run_procedure(
    procedure: str,
    action_set: ActionSet,
    horizon: int,
    references: Sequence[Sequence],
    adversary: AdversarySpec,
    seed: int = DEFAULT_SEED,
    delta: float = 0.1,
    exact: bool = False,
) -> Transcript:
    """
    Запускает процедуру по идентификатору.

    Raises:
        UnknownProcedure: Неизвестный идентификатор процедуры.
    """
    if adversary.strategy not in STRATEGIES:
        raise UnknownStrategy(f"Неизвестная стратегия противника '{adversary.strategy}'")
    if procedure in ("simple", "multi"):
        if procedure == "simple" and len(references) > 1:
            references = references[:1]
        return run_simple_procedure(action_set, horizon, references, adversary, seed, exact=exact)
    if procedure == "grid":
        if horizon >= 10_000:
            console.log(f"[yellow]Сеточный прогнозист:[/] t={horizon}, δ={delta}, зерно {seed}")
        return run_grid_forecaster(action_set, horizon, references, adversary, delta, seed)
    raise UnknownProcedure(f"Неизвестная процедура '{procedure}' (ожидалось: {', '.join(PROCEDURES)})")


# --- Учебные примеры ---

EXAMPLE_1_ACTIONS = ("1", "0", "0", "0", "0", "1", "1", "1", "1", "0")
EXAMPLE_1_REFERENCE = (Fraction(1, 5),) * 5 + (Fraction(4, 5),) * 5
EXAMPLE_1_FORECASTS = (
    Fraction(1), Fraction(0), Fraction(1, 2), Fraction(1, 2), Fraction(1, 2),
    Fraction(1, 2), Fraction(1, 2), Fraction(1, 2), Fraction(1), Fraction(0),
)


def replay_example_1(m: int = 1, exact: bool = True) -> Transcript:
    """
    Таблица из 10 периодов (a, b, c) для двух действий; m - число
    периодических повторений (10m периодов).
    """
    action_set = ActionSet.binary()

    def values(seq):
        return [from_scalar(action_set, v if exact else float(v), exact=exact) for v in seq] * m

    return Transcript(
        action_set=action_set,
        actions=list(EXAMPLE_1_ACTIONS) * m,
        reference=values(EXAMPLE_1_REFERENCE),
        forecasts=values(EXAMPLE_1_FORECASTS),
        exact=exact,
    )


def example1_spherical_gap(alpha: float, m: int = 1) -> tuple[float, float]:
    """(B^L(c), R^L(b)) α-сферического правила на таблице примера."""
    transcript = replay_example_1(m, exact=False)
    rule = make_spherical(transcript.action_set, alpha)
    return (
        float(brier(rule, transcript.actions, transcript.forecasts)),
        float(refinement(rule, transcript.actions, reference_binning(transcript.reference))),
    )


def replay_step_failure(horizon: int, tie_high: bool = True) -> Transcript:
    """
    Простая процедура с постоянным эталоном и затравкой 1/2 против
    чередующихся действий, на которых ступенчатое правило ошибается
    в каждом периоде: 0,1,0,1,… для выбора "c ≥ 1/2" и 1,0,1,0,…
    для выбора "c > 1/2".
    """
    action_set = ActionSet.binary()
    pattern = ("0", "1") if tie_high else ("1", "0")
    return run_simple_procedure(
        action_set,
        horizon,
        [["b"] * horizon],
        AdversarySpec("pattern", pattern=pattern),
        seed_forecast=from_scalar(action_set, Fraction(1, 2)),
        exact=True,
    )


# --- Строки отчета симуляции ---

SIMULATION_COLUMNS = ["t", "rule", "B", "K", "R", "bound", "gap", "seed", "config_hash"]


def _prefix_bound(procedure: str, rule: ScoringRule, t: int, bins_used: int, joint_k: float) -> float | None:
    """
    Граница для B − R(b) на горизонте t.

    Простая процедура: 2M_L(N/t)(ln(t/N)+1), N - число посещенных корзин.
    Сеточный прогнозист: M_b·√K(c; b×c), так как R(b) ≥ R(b×c).
    """
    if procedure == "grid":
        return None if rule.declared_bound is None else rule.declared_bound * math.sqrt(max(joint_k, 0.0))
    if rule.declared_lipschitz is None:
        return None
    return 2 * rule.declared_lipschitz * (bins_used / t) * (math.log(t / bins_used) + 1)


def simulation_rows(
    transcript: Transcript,
    rules: Sequence[ScoringRule],
    horizons: Sequence[int],
    procedure: str,
    seed: int,
    config_hash: str | None = None,
) -> list[dict]:
    """
    Строки (t, rule, B, K, R, bound, gap) по префиксам прогона длины t.

    K - калибровка на разбиении по прогнозам, R - refinement на разбиении
    по эталону, gap = B − R.
    """
    quadratic = make_quadratic(transcript.action_set)
    rows = []
    for t in sorted(h for h in horizons if h <= len(transcript)):
        actions = transcript.actions[:t]
        forecasts = transcript.forecasts[:t]
        b_bins = reference_binning(transcript.reference[:t])
        c_bins = from_forecasts(forecasts)
        joint_k = float(calibration(quadratic, actions, forecasts, joint(b_bins, c_bins)))
        bins_used = len(b_bins.codes()[1])
        for rule in rules:
            B = float(brier(rule, actions, forecasts))
            R = float(refinement(rule, actions, b_bins))
            bound = _prefix_bound(procedure, rule, t, bins_used, joint_k)
            rows.append({
                "t": t,
                "rule": rule.name,
                "B": B,
                "K": float(calibration(rule, actions, forecasts, c_bins)),
                "R": R,
                "bound": "" if bound is None else bound,
                "gap": B - R,
                "seed": seed,
                "config_hash": config_hash or "",
            })
    return rows
