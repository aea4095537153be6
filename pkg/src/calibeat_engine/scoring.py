# Файл: src/calibeat_engine/scoring.py
"""
Модуль каталога собственных правил оценки (proper scoring rules).

Правило задается вектором потерь c ↦ L(c) ∈ R^A; из него выводятся
ожидаемые потери L(d,c) = d·L(c), энтропия H(c) = L(c,c) и дивергенция
D(d,c) = L(d,c) − L(d,d). Все функции векторизованы: матрица прогнозов
(n, |A|) переходит в матрицу векторов потерь (n, |A|).

Каталог: квадратичное, α-сферическое, α-степенное (Цаллис), ступенчатое
правило и правило, индуцированное функцией полезности. Константы
ограниченности M_b и Липшица M_L объявляются аналитически (см. DESIGN.md),
эмпирические нижние оценки дает estimate_constants.
"""
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from config import PROPERNESS_SAMPLES, PROPERNESS_SEED, SCORE_TOLERANCE
from .errors import ActionSetMismatch, BadAlpha, MissingConstant, UnknownRule, WrongArity
from .simplex import ActionSet, Dist, quasi_random_points

LossFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScoringRule:
    """
    Правило оценки, заданное векторной функцией потерь.

    Attributes:
        name (str): Идентификатор правила в каталоге.
        action_set (ActionSet): Множество действий.
        loss_fn (LossFn): Векторизованное отображение (n,|A|) -> (n,|A|).
        declared_bound (float | None): Константа M_b (M-ограниченность).
        declared_lipschitz (float | None): Константа M_L (M-Липшиц).
        proper (bool): Собственность, подтвержденная выборочной проверкой.
        exact_capable (bool): Правило сохраняет рациональную арифметику.
        divergence_fn: Необязательная замкнутая формула D(d,c).
    """
    name: str
    action_set: ActionSet
    loss_fn: LossFn = field(repr=False)
    declared_bound: float | None = None
    declared_lipschitz: float | None = None
    proper: bool = False
    exact_capable: bool = True
    divergence_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)


# --- Векторизованные величины ---

def _prepare(rule: ScoringRule, forecasts: np.ndarray) -> np.ndarray:
    C = np.atleast_2d(np.asarray(forecasts))
    if C.dtype == object and not rule.exact_capable:
        C = C.astype(float)
    return C


def loss_matrix(rule: ScoringRule, forecasts: np.ndarray) -> np.ndarray:
    """Векторы потерь L(c_s) для каждой строки матрицы прогнозов."""
    return rule.loss_fn(_prepare(rule, forecasts))


def expected_loss_rows(rule: ScoringRule, outcomes: np.ndarray, forecasts: np.ndarray) -> np.ndarray:
    """Построчно L(d_s, c_s) = d_s·L(c_s)."""
    D = np.atleast_2d(np.asarray(outcomes))
    return (D * loss_matrix(rule, forecasts)).sum(axis=1)


def entropy_rows(rule: ScoringRule, points: np.ndarray) -> np.ndarray:
    """Построчно H(c_s) = L(c_s, c_s)."""
    return expected_loss_rows(rule, points, points)


def divergence_rows(rule: ScoringRule, outcomes: np.ndarray, forecasts: np.ndarray) -> np.ndarray:
    """Построчно D(d_s, c_s) = L(d_s, c_s) − L(d_s, d_s)."""
    if rule.divergence_fn is not None:
        D = np.atleast_2d(np.asarray(outcomes))
        C = np.atleast_2d(np.asarray(forecasts))
        if not rule.exact_capable:
            D, C = D.astype(float), C.astype(float)
        return rule.divergence_fn(D, C)
    return expected_loss_rows(rule, outcomes, forecasts) - entropy_rows(rule, outcomes)


# --- Операции над отдельными точками ---

def _check(rule: ScoringRule, *points: Dist) -> None:
    for p in points:
        if p.action_set != rule.action_set:
            raise ActionSetMismatch(
                f"Правило '{rule.name}' задано над {rule.action_set.labels}, "
                f"а точка над {p.action_set.labels}"
            )


def _scalar(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return Fraction(int(value))
    return value


def loss_vector(rule: ScoringRule, c: Dist) -> np.ndarray:
    _check(rule, c)
    return loss_matrix(rule, c.weights[None, :])[0]


def expected_loss(rule: ScoringRule, d: Dist, c: Dist):
    """
    Ожидаемые потери L(d,c) = d·L(c).

    Raises:
        ActionSetMismatch: d или c заданы над другим множеством действий.
    """
    _check(rule, d, c)
    return _scalar(expected_loss_rows(rule, d.weights[None, :], c.weights[None, :])[0])


def divergence(rule: ScoringRule, d: Dist, c: Dist):
    """
    Дивергенция D(d,c) = L(d,c) − L(d,d).

    Raises:
        ActionSetMismatch: d или c заданы над другим множеством действий.
    """
    _check(rule, d, c)
    return _scalar(divergence_rows(rule, d.weights[None, :], c.weights[None, :])[0])


def entropy(rule: ScoringRule, c: Dist):
    """Энтропия H(c) = L(c,c)."""
    _check(rule, c)
    return _scalar(entropy_rows(rule, c.weights[None, :])[0])


# --- Проверка собственности ---

def check_properness(rule: ScoringRule, samples: int = PROPERNESS_SAMPLES, seed: int = PROPERNESS_SEED) -> bool:
    """
    Выборочная проверка собственности: D(d,c) ≥ −1e-10 и D(d,d) = 0
    на детерминированной квазислучайной выборке внутренних точек симплекса.
    """
    k = rule.action_set.size
    points = quasi_random_points(k, 2 * samples, seed)
    d, c = points[:samples], points[samples:]
    with np.errstate(all="ignore"):
        cross = np.asarray(divergence_rows(rule, d, c), dtype=float)
        diagonal = np.asarray(divergence_rows(rule, d, d), dtype=float)
    return bool(np.all(cross >= -SCORE_TOLERANCE) and np.all(diagonal == 0.0))


def _verified(rule: ScoringRule) -> ScoringRule:
    return replace(rule, proper=check_properness(rule))


# --- Каталог ---

def make_quadratic(action_set: ActionSet) -> ScoringRule:
    """
    Квадратичное правило: L_A(a,c) = −2c(a) + ‖c‖², D(d,c) = ‖c−d‖².

    Константы: M_L = 2√|A| (L(c)−L(c′) = −2Δ + sΔ·1, Δ ⊥ 1),
    M_b = √(8 + (|A|−1)²/|A|).
    """
    k = action_set.size

    def loss(C: np.ndarray) -> np.ndarray:
        return -2 * C + (C * C).sum(axis=1, keepdims=True)

    def div(D: np.ndarray, C: np.ndarray) -> np.ndarray:
        diff = C - D
        return (diff * diff).sum(axis=1)

    return _verified(ScoringRule(
        name="quadratic",
        action_set=action_set,
        loss_fn=loss,
        declared_bound=math.sqrt(8 + (k - 1) ** 2 / k),
        declared_lipschitz=2 * math.sqrt(k),
        divergence_fn=div,
    ))


def make_spherical(action_set: ActionSet, alpha: float) -> ScoringRule:
    """
    α-сферическое правило, α > 1: L_A(a,c) = −c(a)^(α−1) / ‖c‖_α^(α−1),
    H(c) = −‖c‖_α. Липшицево только при α ≥ 2.

    Raises:
        BadAlpha: alpha ≤ 1.
    """
    alpha = float(alpha)
    if not alpha > 1:
        raise BadAlpha(f"Сферическое правило требует α > 1, получено {alpha}")
    k = action_set.size

    def loss(C: np.ndarray) -> np.ndarray:
        C = np.asarray(C, dtype=float)
        norm = (C ** alpha).sum(axis=1, keepdims=True) ** ((alpha - 1) / alpha)
        return -(C ** (alpha - 1)) / norm

    if alpha == 2:
        bound, lipschitz = math.sqrt(2), math.sqrt(k)
    else:
        bound = math.sqrt(k)
        lipschitz = None
        if alpha > 2:
            lipschitz = (alpha - 1) * k ** (1 - 1 / alpha) * (1 + k ** (0.5 - 1 / alpha))

    return _verified(ScoringRule(
        name=f"spherical:{alpha:g}",
        action_set=action_set,
        loss_fn=loss,
        declared_bound=bound,
        declared_lipschitz=lipschitz,
        exact_capable=False,
    ))


def make_power(action_set: ActionSet, alpha: float) -> ScoringRule:
    """
    α-степенное правило (Цаллис), α ∉ {0, 1}:
    L_A(a,c) = −c(a)^(α−1)/(α−1) + Σc^α/α, H(c) = −Σc^α/(α(α−1)).

    При целом α вычисления остаются точными в рациональном режиме.
    При α < 1 правило неограничено (константы не объявляются).

    Raises:
        BadAlpha: alpha равно 0 или 1.
    """
    if float(alpha) in (0.0, 1.0):
        raise BadAlpha(f"Степенное правило не определено при α = {alpha}")
    a = int(alpha) if float(alpha).is_integer() else float(alpha)
    integral = isinstance(a, int)
    k = action_set.size

    def loss(C: np.ndarray) -> np.ndarray:
        if C.dtype == object:
            first, second = Fraction(1, a - 1), Fraction(1, a)
        else:
            first, second = 1.0 / (a - 1), 1.0 / a
        return -first * C ** (a - 1) + second * (C ** a).sum(axis=1, keepdims=True)

    bound = lipschitz = None
    if a > 1:
        bound = math.sqrt(k) * (1 / (a - 1) + 1 / a)
    if a >= 2:
        lipschitz = 1 + math.sqrt(2 * k)

    return _verified(ScoringRule(
        name=f"power:{a:g}" if not integral else f"power:{a}",
        action_set=action_set,
        loss_fn=loss,
        declared_bound=bound,
        declared_lipschitz=lipschitz,
        exact_capable=integral,
    ))


def make_step_rule(action_set: ActionSet, tie_high: bool = True) -> ScoringRule:
    """
    Ступенчатое правило для |A|=2: L(d,c) = 1−d при c ≥ 1/2, иначе d
    (d и c - вероятности действия "1"). Ограничено (M_b = √2), но разрывно.

    Args:
        action_set (ActionSet): Двухэлементное множество действий.
        tie_high (bool): При c = 1/2 выбирается ветвь "c ≥ 1/2" (по умолчанию).
            False дает альтернативный выбор оптимального решения в точке 1/2.

    Raises:
        WrongArity: |A| != 2.
    """
    if action_set.size != 2:
        raise WrongArity(f"Ступенчатое правило требует |A|=2, получено {action_set.size}")
    one = action_set.scalar_index
    zero = 1 - one

    def loss(C: np.ndarray) -> np.ndarray:
        p = C[:, one]
        high = (p >= 0.5) if tie_high else (p > 0.5)
        high = np.asarray(high, dtype=bool).astype(np.int64)
        L = np.zeros(C.shape, dtype=np.int64)
        L[:, zero] = high
        L[:, one] = 1 - high
        return L.astype(C.dtype)

    return _verified(ScoringRule(
        name="step" if tie_high else "step:low",
        action_set=action_set,
        loss_fn=loss,
        declared_bound=math.sqrt(2),
        declared_lipschitz=None,
    ))


def make_induced_rule(u) -> ScoringRule:
    """
    Правило, индуцированное полезностью: L_A(a,c) = −u(a, x*(c)).

    Args:
        u (Utility): Полезность из модуля decision с оракулом x*.

    Raises:
        OptimizerFailure: Оракул x* не вернул максимизатор.
    """
    def loss(C: np.ndarray) -> np.ndarray:
        return -u.best_response_payoffs(C)

    return _verified(ScoringRule(
        name=f"induced:{u.name}",
        action_set=u.action_set,
        loss_fn=loss,
        declared_bound=u.payoff_range_norm(),
        declared_lipschitz=None,
        exact_capable=u.exact_capable,
    ))


def make_constant_rule(action_set: ActionSet, value=0) -> ScoringRule:
    """Вырожденное правило с постоянным вектором потерь: D ≡ 0."""
    def loss(C: np.ndarray) -> np.ndarray:
        return np.zeros(C.shape, dtype=C.dtype) + value

    return _verified(ScoringRule(
        name="constant",
        action_set=action_set,
        loss_fn=loss,
        declared_bound=0.0,
        declared_lipschitz=0.0,
    ))


def make_entropy_rule(
    action_set: ActionSet,
    entropy_fn: Callable[[np.ndarray], np.ndarray],
    gradient_fn: Callable[[np.ndarray], np.ndarray],
    name: str,
    declared_bound: float | None = None,
    declared_lipschitz: float | None = None,
) -> ScoringRule:
    """
    Правило из вогнутой энтропии H и ее суперградиента G:
    L(c) = G(c) + (H(c) − c·G(c))·1.

    Args:
        entropy_fn: Векторизованная H: (n,|A|) -> (n,).
        gradient_fn: Векторизованный суперградиент G: (n,|A|) -> (n,|A|).
    """
    def loss(C: np.ndarray) -> np.ndarray:
        G = gradient_fn(C)
        offset = entropy_fn(C) - (C * G).sum(axis=1)
        return G + offset[:, None]

    return _verified(ScoringRule(
        name=name,
        action_set=action_set,
        loss_fn=loss,
        declared_bound=declared_bound,
        declared_lipschitz=declared_lipschitz,
        exact_capable=False,
    ))


def scale_rule(rule: ScoringRule, factor, name: str | None = None) -> ScoringRule:
    """Умножает вектор потерь (и все оценки) на положительный множитель."""
    base_loss, base_div = rule.loss_fn, rule.divergence_fn

    def loss(C: np.ndarray) -> np.ndarray:
        return factor * base_loss(C)

    div = None
    if base_div is not None:
        def div(D: np.ndarray, C: np.ndarray) -> np.ndarray:
            return factor * base_div(D, C)

    return replace(
        rule,
        name=name or f"{rule.name}*{factor}",
        loss_fn=loss,
        divergence_fn=div,
        declared_bound=None if rule.declared_bound is None else rule.declared_bound * float(factor),
        declared_lipschitz=None if rule.declared_lipschitz is None else rule.declared_lipschitz * float(factor),
        exact_capable=rule.exact_capable and isinstance(factor, (int, Fraction)),
    )


def normalize_rule(rule: ScoringRule, mode: str) -> ScoringRule:
    """
    Нормирует правило к классу 1-ограниченных (mode="bounded") или
    1-липшицевых (mode="lipschitz") правил делением на объявленную константу.

    Raises:
        MissingConstant: Нужная константа не объявлена.
        UnknownRule: Неизвестный режим нормировки.
    """
    if mode == "bounded":
        constant = rule.declared_bound
    elif mode == "lipschitz":
        constant = rule.declared_lipschitz
    else:
        raise UnknownRule(f"Неизвестный режим нормировки '{mode}' (bounded | lipschitz)")
    if constant is None:
        raise MissingConstant(f"У правила '{rule.name}' не объявлена константа для режима '{mode}'")
    if constant == 0 or constant == 1:
        return rule
    return scale_rule(rule, 1.0 / constant, name=f"{rule.name}@{mode}")


def estimate_constants(rule: ScoringRule, samples: int, seed: int) -> tuple[float, float]:
    """
    Эмпирические нижние оценки констант M_b и M_L.

    Пары берутся из квазислучайной выборки симплекса (плюс вершины и центр);
    для |A|=2 добавляются соседние пары равномерной сетки из `samples`
    точек, так что оценка M_L разрывного правила растет вместе с выборкой.

    Returns:
        tuple[float, float]: (max ‖L(c)−L(c′)‖, max ‖L(c)−L(c′)‖/‖c−c′‖).
    """
    k = rule.action_set.size
    points = np.vstack([
        np.eye(k),
        np.full((1, k), 1.0 / k),
        quasi_random_points(k, max(samples, 2), seed)[:400],
    ])
    with np.errstate(all="ignore"):
        L = np.asarray(loss_matrix(rule, points), dtype=float)
        loss_gap = np.linalg.norm(L[:, None, :] - L[None, :, :], axis=2)
        point_gap = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
        ratio = np.where(point_gap > 1e-15, loss_gap / np.where(point_gap > 0, point_gap, 1.0), 0.0)

        bound_candidates = [loss_gap[np.isfinite(loss_gap)]]
        ratio_candidates = [ratio[np.isfinite(ratio)]]

        if k == 2:
            grid = np.linspace(0.0, 1.0, max(samples, 2) + 1)
            line = np.zeros((grid.size, 2))
            line[:, rule.action_set.scalar_index] = grid
            line[:, 1 - rule.action_set.scalar_index] = 1.0 - grid
            L_line = np.asarray(loss_matrix(rule, line), dtype=float)
            steps = np.linalg.norm(np.diff(L_line, axis=0), axis=1)
            widths = np.linalg.norm(np.diff(line, axis=0), axis=1)
            bound_candidates.append(steps[np.isfinite(steps)])
            local = steps / widths
            ratio_candidates.append(local[np.isfinite(local)])

    m_bound = max((float(c.max()) for c in bound_candidates if c.size), default=0.0)
    m_lipschitz = max((float(c.max()) for c in ratio_candidates if c.size), default=0.0)
    return m_bound, m_lipschitz


def rule_from_id(action_set: ActionSet, rule_id: str, utilities: dict | None = None) -> ScoringRule:
    """
    Строит правило по строковому идентификатору каталога:
    "quadratic", "spherical:α", "power:α", "step", "step:low",
    "induced:<id>"; суффикс "@bounded" или "@lipschitz" нормирует правило.

    Raises:
        UnknownRule: Идентификатор не распознан.
    """
    base, _, mode = rule_id.strip().partition("@")
    kind, _, arg = base.partition(":")
    try:
        if kind == "quadratic" and not arg:
            rule = make_quadratic(action_set)
        elif kind == "spherical":
            rule = make_spherical(action_set, float(arg))
        elif kind == "power":
            rule = make_power(action_set, float(arg))
        elif kind == "step" and arg in ("", "high", "low"):
            rule = make_step_rule(action_set, tie_high=(arg != "low"))
        elif kind == "induced" and utilities is not None and arg in utilities:
            rule = make_induced_rule(utilities[arg])
        else:
            raise UnknownRule(f"Неизвестное правило '{rule_id}'")
    except ValueError:
        raise UnknownRule(f"Некорректный параметр правила '{rule_id}'") from None
    if mode:
        rule = normalize_rule(rule, mode)
    return rule
