# Файл: src/calibeat_engine/decision.py
"""
Модуль принятия решений: полезности u(a, x), оракул оптимального
решения x*(c), индуцированные правила оценки L^u и регрет.

Лицо, принимающее решения, отвечает на прогноз c оптимальным
решением x*(c). Регрет по разбиению i - выигрыш лучшего отображения
корзин в решения над ответами на прогнозы; он совпадает с калибровкой
K^{L^u}(c; i) индуцированного правила. Полный перебор отображений
оставлен как независимый оракул для небольших задач.
"""
import functools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from config import BRUTE_FORCE_LIMIT, INDUCED_RULE_CACHE_SIZE, SCORE_TOLERANCE
from src.utils.logger import console
from .binning import PureBinning, from_forecasts, is_forecast_measurable, joint
from .errors import LengthMismatch, NotARefinement, OptimizerFailure, UnknownRule
from .scores import Binning, bin_summary, brier, calibration, reference_binning, refinement
from .scoring import ScoringRule, loss_matrix, make_induced_rule
from .simplex import ActionSet, Dist, action_matrix, compensated_sum, stack, to_fraction

TIE_RULES = ("lowest", "highest")


@dataclass(frozen=True, eq=False)
class Utility:
    """
    Полезность u: A × X → R.

    Конечное множество решений задается таблицей payoffs размера |A|×|X|;
    для непрерывных X вместо таблицы передается оракул maximizer
    (прогнозы -> решения) и payoff_fn (решения -> векторы u(·, x)).

    Attributes:
        name (str): Идентификатор полезности.
        action_set (ActionSet): Множество действий A.
        decisions (tuple | None): Метки решений X.
        payoffs (np.ndarray | None): Таблица u(a, x).
        tie_rule (str): Выбор среди максимизаторов: "lowest" | "highest".
    """
    name: str
    action_set: ActionSet
    decisions: tuple | None = None
    payoffs: np.ndarray | None = None
    tie_rule: str = "lowest"
    maximizer: Callable[[np.ndarray], np.ndarray] | None = None
    payoff_fn: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def finite(self) -> bool:
        return self.payoffs is not None

    @property
    def exact_capable(self) -> bool:
        return self.finite and self.payoffs.dtype == object

    def _aligned(self, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Дроби сочетаются только с дробями; иначе обе стороны во float."""
        if C.dtype == object and self.payoffs.dtype == object:
            return C, self.payoffs
        return np.asarray(C, dtype=float), self.payoffs.astype(float)

    def expected_payoffs(self, C: np.ndarray) -> np.ndarray:
        """U(c, x) = Σ_a c(a) u(a, x) для всех x: матрица (n, |X|)."""
        C, table = self._aligned(np.atleast_2d(np.asarray(C)))
        return C @ table

    def best_response_indices(self, C: np.ndarray) -> np.ndarray:
        """
        Индексы x*(c) для каждой строки C.

        Raises:
            OptimizerFailure: Нет конечного множества решений.
        """
        if not self.finite:
            raise OptimizerFailure(f"У полезности '{self.name}' нет конечного множества решений")
        values = self.expected_payoffs(C)
        best = values.max(axis=1)
        if values.dtype == object:
            is_max = np.asarray(values == best[:, None], dtype=bool)
        else:
            is_max = values >= best[:, None] - 1e-12
        if self.tie_rule == "highest":
            return values.shape[1] - 1 - np.argmax(is_max[:, ::-1], axis=1)
        return np.argmax(is_max, axis=1)

    def best_response(self, d: Dist):
        """Оптимальное решение x*(d)."""
        if self.finite:
            return self.decisions[int(self.best_response_indices(d.weights[None, :])[0])]
        return self.maximizer(np.asarray(d.weights, dtype=float)[None, :])[0]

    def best_response_payoffs(self, C: np.ndarray) -> np.ndarray:
        """Векторы u(·, x*(c)) для каждой строки C: матрица (n, |A|)."""
        C = np.atleast_2d(np.asarray(C))
        if self.finite:
            _, table = self._aligned(C)
            return table[:, self.best_response_indices(C)].T
        decisions = self.maximizer(np.asarray(C, dtype=float))
        if decisions is None:
            raise OptimizerFailure(f"Оракул полезности '{self.name}' не вернул решения")
        return self.payoff_fn(decisions)

    def payoff_range_norm(self) -> float | None:
        """√Σ_a (max_x u(a,x) − min_x u(a,x))²: константа ограниченности L^u."""
        if not self.finite:
            return None
        table = self.payoffs.astype(float)
        spread = table.max(axis=1) - table.min(axis=1)
        return float(math.sqrt(float((spread * spread).sum())))


def make_utility(
    action_set: ActionSet,
    decisions: Sequence,
    payoffs,
    tie_rule: str = "lowest",
    name: str = "custom",
    exact: bool | None = None,
) -> Utility:
    """
    Полезность с конечным множеством решений.

    Raises:
        LengthMismatch: Размер таблицы не равен |A|×|X|.
        UnknownRule: Неизвестное правило выбора среди максимизаторов.
    """
    decisions = tuple(str(x) for x in decisions)
    rows = [list(r) for r in payoffs]
    if len(rows) != action_set.size or any(len(r) != len(decisions) for r in rows):
        raise LengthMismatch(f"Таблица полезности должна быть {action_set.size}×{len(decisions)}")
    if tie_rule not in TIE_RULES:
        raise UnknownRule(f"Неизвестное правило выбора '{tie_rule}' (ожидалось: {', '.join(TIE_RULES)})")
    if exact is None:
        exact = all(isinstance(v, (int, Fraction)) for r in rows for v in r)
    table = np.empty((action_set.size, len(decisions)), dtype=object if exact else float)
    for a, row in enumerate(rows):
        table[a] = [to_fraction(v) for v in row] if exact else [float(v) for v in row]
    return Utility(name, action_set, decisions, table, tie_rule)


def threshold_utility(action_set: ActionSet | None = None, tie_rule: str = "highest") -> Utility:
    """
    Полезность "угадай действие": u(a, x) = −1 при a ≠ x, иначе 0.

    Индуцированное правило - ступенчатое; при c = 1/2 по умолчанию
    выбирается решение "1".
    """
    action_set = action_set or ActionSet.binary()
    k = action_set.size
    payoffs = [[0 if a == x else -1 for x in range(k)] for a in range(k)]
    return make_utility(action_set, action_set.labels, payoffs, tie_rule=tie_rule, name="threshold")


def constant_utility(action_set: ActionSet, kappa=0) -> Utility:
    return make_utility(action_set, ("stay",), [[kappa] for _ in action_set.labels], name="constant")


def utility_from_rule(rule: ScoringRule) -> Utility:
    """
    Полезность u(a, x) = −L(a, x) с X = C: для собственного правила
    оптимальное решение x*(d) = d, и индуцированное правило совпадает с L.
    """
    def maximizer(C: np.ndarray) -> np.ndarray:
        return C

    def payoff_fn(X: np.ndarray) -> np.ndarray:
        return -np.asarray(loss_matrix(rule, X), dtype=float)

    return Utility(f"from:{rule.name}", rule.action_set, maximizer=maximizer, payoff_fn=payoff_fn)


def normalize_utility(u: Utility) -> Utility:
    """Делит таблицу на размах выплат, чтобы L^u было 1-ограниченным."""
    norm = u.payoff_range_norm()
    if not norm:
        return u
    if u.exact_capable and float(norm).is_integer():
        payoffs = u.payoffs / to_fraction(int(norm))
    else:
        payoffs = u.payoffs.astype(float) / norm
    return replace(u, name=f"{u.name}@bounded", payoffs=payoffs)


def check_maximizer(u: Utility, samples: Sequence[Dist], candidates: np.ndarray) -> bool:
    """U(d, x*(d)) ≥ U(d, x) − 1e-10 для выборочных d и решений-кандидатов x."""
    D = np.asarray(stack(samples), dtype=float)
    best = (D * np.asarray(u.best_response_payoffs(D), dtype=float)).sum(axis=1)
    if u.finite:
        others = np.asarray(u.expected_payoffs(D), dtype=float)
    else:
        others = D @ np.asarray(u.payoff_fn(candidates), dtype=float).T
    return bool(np.all(best[:, None] >= others - SCORE_TOLERANCE))


@functools.lru_cache(maxsize=INDUCED_RULE_CACHE_SIZE)
def induced_rule(u: Utility) -> ScoringRule:
    """Индуцированное правило L^u; последние INDUCED_RULE_CACHE_SIZE полезностей кэшируются по объекту."""
    return make_induced_rule(u)


# --- Средняя полезность и регрет ---

def _matrices(u: Utility, actions: Sequence, forecasts: Sequence[Dist]) -> tuple[np.ndarray, np.ndarray]:
    actions, forecasts = list(actions), list(forecasts)
    if len(actions) != len(forecasts):
        raise LengthMismatch(f"Действий {len(actions)}, прогнозов {len(forecasts)}")
    C = stack(forecasts)
    exact = C.dtype == object and u.exact_capable
    if not exact:
        C = np.asarray(C, dtype=float)
    return action_matrix(u.action_set, actions, exact=exact), C


def _value(x):
    if isinstance(x, (Fraction, float)):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return float(x)


def avg_utility(u: Utility, actions: Sequence, forecasts: Sequence[Dist]):
    """
    U_t(c) = (1/t) Σ u(a_s, x*(c_s)).

    Raises:
        LengthMismatch: Длины последовательностей различаются.
    """
    A, C = _matrices(u, actions, forecasts)
    realized = (A * u.best_response_payoffs(C)).sum(axis=1)
    return _value(compensated_sum(realized) / A.shape[0])


@dataclass(frozen=True)
class RegretReport:
    """
    Регрет по разбиению и его контрольные величины.

    Attributes:
        avg_utility: U_t(c).
        best_remap_utility: max_ξ (1/t) Σ u(a_s, ξ(i_s)) (по корзинам).
        regret: best_remap_utility − avg_utility.
        matched_calibration: K_t^{L^u}(c; i).
        brute_force_utility: Тот же максимум полным перебором ξ (или None).
    """
    avg_utility: float | Fraction
    best_remap_utility: float | Fraction
    regret: float | Fraction
    matched_calibration: float | Fraction
    brute_force_utility: float | Fraction | None = None

    @property
    def residual(self) -> float:
        return float(self.regret) - float(self.matched_calibration)

    def to_dict(self) -> dict:
        def encode(v):
            return str(v) if isinstance(v, Fraction) else v
        return {
            "avg_utility": encode(self.avg_utility),
            "best_remap_utility": encode(self.best_remap_utility),
            "regret": encode(self.regret),
            "matched_calibration": encode(self.matched_calibration),
            "brute_force_utility": encode(self.brute_force_utility),
            "residual": self.residual,
        }


def _bin_decision_totals(u: Utility, summary) -> np.ndarray:
    """T[i, x] = n_t(i)·U(ā_t(i), x) для корзин с n_t(i) > 0."""
    mask = summary.active
    sums = summary.counts[mask][:, None] * summary.action_avg[mask]
    return u.expected_payoffs(sums)


def brute_force_remap(totals: np.ndarray) -> float | Fraction:
    """
    max по всем отображениям ξ: I → X суммы Σ_i T[i, ξ(i)] полным
    перебором |X|^|I| вариантов (накопительным сложением с broadcasting).
    """
    best_so_far = np.zeros(1, dtype=totals.dtype)
    for row in totals:
        best_so_far = (best_so_far[:, None] + row[None, :]).ravel()
    return best_so_far.max()


def regret(
    u: Utility,
    actions: Sequence,
    forecasts: Sequence[Dist],
    binning: Binning,
    brute_force: bool = True,
) -> RegretReport:
    """
    Регрет Reg_t^u(c; i) и калибровка индуцированного правила.

    Лучшее отображение строится по корзинам: ξ(i) = x*(ā_t(i)).
    При |X|^|I| ≤ 10^6 тот же максимум считается полным перебором.

    Raises:
        LengthMismatch: Длины последовательностей различаются.
        NotARefinement: Разбиение не измельчает прогнозы.
        OptimizerFailure: Оракул не вернул решения.
    """
    forecasts = list(forecasts)
    if not is_forecast_measurable(binning, forecasts):
        raise NotARefinement("Разбиение для регрета должно измельчать прогнозы")
    A, C = _matrices(u, actions, forecasts)
    t = A.shape[0]
    summary = bin_summary(binning, A)
    mask = summary.active

    current = avg_utility(u, actions, forecasts)
    best_rows = summary.counts[mask] * (summary.action_avg[mask] * u.best_response_payoffs(summary.action_avg[mask])).sum(axis=1)
    best_remap = _value(compensated_sum(best_rows) / t)

    brute = None
    if brute_force and u.finite:
        bins_used = int(np.count_nonzero(mask))
        if len(u.decisions) ** bins_used <= BRUTE_FORCE_LIMIT:
            brute = _value(brute_force_remap(_bin_decision_totals(u, summary)) / t)
        else:
            console.log(
                f"[yellow]Полный перебор {len(u.decisions)}^{bins_used} отображений превышает "
                f"предел {BRUTE_FORCE_LIMIT}; используется максимум по корзинам[/]"
            )

    rule = induced_rule(u)
    matched = calibration(rule, actions, forecasts, binning)
    return RegretReport(current, best_remap, _value(best_remap - current), matched, brute)


def utility_gain_check(
    u: Utility,
    actions: Sequence,
    b_forecasts: Sequence[Dist],
    c_forecasts: Sequence[Dist],
    binning: Binning,
) -> dict:
    """
    Разложение выигрыша: U(c) − U(b) = Reg(b; i) + (R^{L^u}(i) − B^{L^u}(c)).

    Raises:
        NotARefinement: Разбиение i не измельчает эталон b.
    """
    if not is_forecast_measurable(binning, b_forecasts):
        raise NotARefinement("Разбиение i должно измельчать эталонные прогнозы b")
    rule = induced_rule(u)
    gain = float(avg_utility(u, actions, c_forecasts)) - float(avg_utility(u, actions, b_forecasts))
    reg_b = float(regret(u, actions, b_forecasts, binning, brute_force=False).regret)
    refinement_term = float(refinement(rule, actions, binning))
    brier_term = float(brier(rule, actions, c_forecasts))
    return {
        "gain": gain,
        "regret_b": reg_b,
        "refinement": refinement_term,
        "brier_c": brier_term,
        "residual": gain - (reg_b + refinement_term - brier_term),
    }


def swap_vs_forecast_regret(u: Utility, actions: Sequence, forecasts: Sequence[Dist]) -> tuple:
    """
    Swap-регрет (замены решений φ: X → X) и регрет по прогнозам
    (замены по значениям прогноза). Второй не меньше первого.

    Raises:
        LengthMismatch: Длины последовательностей различаются.
    """
    forecasts = list(forecasts)
    A, C = _matrices(u, actions, forecasts)
    t = A.shape[0]
    chosen = u.best_response_indices(C)
    decision_bins = PureBinning(tuple(int(x) for x in chosen))
    summary = bin_summary(decision_bins, A)
    totals = _bin_decision_totals(u, summary)
    current = avg_utility(u, actions, forecasts)
    swap = _value(compensated_sum(totals.max(axis=1)) / t - current)
    forecast = regret(u, actions, forecasts, from_forecasts(forecasts), brute_force=False).regret
    return swap, forecast


def no_regret_check(utilities: Sequence[Utility], actions: Sequence, forecasts: Sequence[Dist]) -> dict:
    """Для каждой полезности: регрет и K^{L^u} на разбиении по прогнозам."""
    forecasts = list(forecasts)
    own = from_forecasts(forecasts)
    result = {}
    for u in utilities:
        report = regret(u, actions, forecasts, own, brute_force=False)
        result[u.name] = {"regret": report.regret, "calibration": report.matched_calibration}
    return result


def gain_statistics(u: Utility, runs: Sequence) -> dict:
    """
    Среднее и выборочное стандартное отклонение по прогонам (Transcript
    с эталоном-прогнозом b) для величин:
    U(c) − U(b) − Reg(b), U(c) − U(b) − Reg(b; b×c), Reg(c), Reg(c; b×c).
    """
    columns: dict[str, list[float]] = {
        "gain_minus_regret_b": [],
        "gain_minus_regret_b_joint": [],
        "regret_c": [],
        "regret_c_joint": [],
    }
    for run in runs:
        b, c = list(run.reference), list(run.forecasts)
        b_bins = reference_binning(b)
        joint_bins = joint(b_bins, from_forecasts(c))
        gain = float(avg_utility(u, run.actions, c)) - float(avg_utility(u, run.actions, b))
        columns["gain_minus_regret_b"].append(gain - float(regret(u, run.actions, b, b_bins, False).regret))
        columns["gain_minus_regret_b_joint"].append(gain - float(regret(u, run.actions, b, joint_bins, False).regret))
        columns["regret_c"].append(float(regret(u, run.actions, c, from_forecasts(c), False).regret))
        columns["regret_c_joint"].append(float(regret(u, run.actions, c, joint_bins, False).regret))
    return {
        name: (float(np.mean(values)), float(np.std(values, ddof=1)) if len(values) > 1 else 0.0)
        for name, values in columns.items()
    }
