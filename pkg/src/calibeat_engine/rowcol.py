# Файл: src/calibeat_engine/rowcol.py
"""
Модуль строчных и столбцовых средних вогнутых функций.

Объект - взвешенная матрица: точки x_ij ∈ R^m и веса w_ij ≥ 0 с суммой 1.
Для вогнутой F считаются общее среднее E_W(F) = Σ w_ij F(x_ij), строчное
R_W(F) = Σ w_i· F(r_i) и столбцовое C_W(F) = Σ w_·j F(c_j), где r_i и c_j -
взвешенные средние строк и столбцов.

Через эти величины выражаются утверждения о калибровке:
матрица x_ij = ā(b, d) средних действий в совместных корзинах и частоты
λ(b, d) дают B^L(c) = C_W(H^L) и R^L(b) = R_W(H^L) для идеально
откалиброванного прогноза c. Модуль проверяет эквивалентности
"превзойти квадратичным правилом => превзойти любым собственным" и
"превзойти => превзойти совместное разбиение" на конкретных матрицах
и случайным поиском контрпримеров.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from config import (
    BIN_VALUE_PRECISION,
    BOUND_TOLERANCE,
    COLLINEARITY_TOLERANCE,
    HULL_TOLERANCE,
    MASS_TOLERANCE,
    SCORE_TOLERANCE,
)
from src.utils.logger import console
from .errors import (
    CollinearityMisclassified,
    DegenerateMatrix,
    LengthMismatch,
    MassNotOne,
    NegativeWeight,
    NotConcave,
    OptimizerFailure,
)
from .scoring import ScoringRule, entropy_rows
from .simplex import ActionSet, Dist, compensated_sum, from_scalar, stack, to_fraction, trusted_dist

HINGE_STRENGTHS = (1, 10, 100, 1000)

# Не более стольких построенных контрпримеров на одну матрицу.
MAX_CONSTRUCTED = 50


@dataclass(frozen=True)
class WeightedMatrix:
    """
    Матрица точек X (I×J×m) с весами W (I×J).

    Attributes:
        X (np.ndarray): Точки x_ij; для m=1 последняя ось длины 1.
        W (np.ndarray): Неотрицательные веса с суммой 1.
    """
    X: np.ndarray
    W: np.ndarray

    @property
    def exact(self) -> bool:
        return self.X.dtype == object and self.W.dtype == object

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    @property
    def row_weights(self) -> np.ndarray:
        return self.W.sum(axis=1)

    @property
    def col_weights(self) -> np.ndarray:
        return self.W.sum(axis=0)

    @property
    def row_active(self) -> np.ndarray:
        return np.array([w > 0 for w in self.row_weights.tolist()], dtype=bool)

    @property
    def col_active(self) -> np.ndarray:
        return np.array([w > 0 for w in self.col_weights.tolist()], dtype=bool)

    @property
    def support(self) -> np.ndarray:
        return np.array([[w > 0 for w in row] for row in self.W.tolist()], dtype=bool)

    def row_averages(self) -> np.ndarray:
        """r_i = Σ_j w_ij x_ij / w_i·; для строк с нулевым весом - нули."""
        totals = self.row_weights
        safe = np.where(self.row_active, totals, 1)
        return (self.W[:, :, None] * self.X).sum(axis=1) / safe[:, None]

    def col_averages(self) -> np.ndarray:
        """c_j = Σ_i w_ij x_ij / w_·j; для столбцов с нулевым весом - нули."""
        totals = self.col_weights
        safe = np.where(self.col_active, totals, 1)
        return (self.W[:, :, None] * self.X).sum(axis=0) / safe[:, None]


def _as_points(X, exact: bool) -> np.ndarray:
    arr = np.array(X, dtype=object)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise LengthMismatch("Матрица точек должна иметь форму I×J или I×J×m")
    if exact:
        out = np.empty(arr.shape, dtype=object)
        for index, value in np.ndenumerate(arr):
            out[index] = to_fraction(value)
        return out
    return arr.astype(float)


def _is_rational(values) -> bool:
    return all(isinstance(v, (int, Fraction, str)) and not isinstance(v, bool) for v in values)


def weighted_matrix(X, W, exact: bool | None = None) -> WeightedMatrix:
    """
    Собирает и проверяет взвешенную матрицу.

    Args:
        X: I×J скаляров или I×J×m точек (списки, массивы).
        W: I×J весов.
        exact (bool | None): Рациональный режим; по умолчанию - если все
            числа целые, дроби или строки.

    Raises:
        LengthMismatch: Формы X и W не согласованы.
        NegativeWeight: Есть отрицательный вес.
        MassNotOne: Сумма весов не равна 1.
    """
    raw_w = np.array(W, dtype=object)
    if exact is None:
        exact = _is_rational(raw_w.ravel().tolist()) and _is_rational(np.array(X, dtype=object).ravel().tolist())
    points = _as_points(X, exact)
    if raw_w.ndim != 2 or raw_w.shape != points.shape[:2]:
        raise LengthMismatch(f"Форма весов {raw_w.shape} не совпадает с формой матрицы {points.shape[:2]}")
    if exact:
        weights = np.empty(raw_w.shape, dtype=object)
        for index, value in np.ndenumerate(raw_w):
            weights[index] = to_fraction(value)
    else:
        weights = raw_w.astype(float)
    if any(w < 0 for w in weights.ravel().tolist()):
        raise NegativeWeight("Веса матрицы должны быть неотрицательными")
    total = compensated_sum(weights.ravel())
    if (total != 1) if exact else abs(total - 1.0) > MASS_TOLERANCE:
        raise MassNotOne(f"Сумма весов матрицы равна {total}, ожидалась 1")
    return WeightedMatrix(points, weights)


def uniform_weights(shape: tuple[int, int], exact: bool = False) -> np.ndarray:
    size = shape[0] * shape[1]
    if exact:
        return np.full(shape, Fraction(1, size), dtype=object)
    return np.full(shape, 1.0 / size)


# --- Вогнутые функции ---

@dataclass(frozen=True)
class ConcaveFunctional:
    """
    Вогнутая функция F: R^m → R, вычисляемая построчно на матрице (n, m).

    Attributes:
        name (str): Идентификатор.
        fn (Callable): Отображение (n, m) -> (n,).
        strict (bool): Строго вогнутая.
        exact_capable (bool): Допускает массивы дробей.
        tested (bool): Прошла выборочную проверку вогнутости.
    """
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    strict: bool = False
    exact_capable: bool = False
    tested: bool = False

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        if not (self.exact_capable and Z.dtype == object):
            Z = np.asarray(Z, dtype=float)
        return self.fn(Z)


def quadratic_functional() -> ConcaveFunctional:
    """Q(z) = −‖z‖²."""
    return ConcaveFunctional("Q", lambda Z: -(Z * Z).sum(axis=1), strict=True, exact_capable=True, tested=True)


def hinge_functional(v: np.ndarray, alpha: float, n: float) -> ConcaveFunctional:
    """F_n(z) = Q(z) − n·max(v·z − α, 0)²: квадратичная с вогнутым штрафом."""
    v = np.asarray(v, dtype=float)

    def fn(Z: np.ndarray) -> np.ndarray:
        excess = np.maximum(Z @ v - alpha, 0.0)
        return -(Z * Z).sum(axis=1) - n * excess * excess

    return ConcaveFunctional(f"hinge[n={n:g}]", fn, strict=True, tested=True)


def smooth_functionals() -> list[ConcaveFunctional]:
    """Гладкие вогнутые функции с ограниченным градиентом."""
    return [
        ConcaveFunctional("sqrt1p", lambda Z: -np.sqrt(1.0 + Z * Z).sum(axis=1), strict=True, tested=True),
        ConcaveFunctional(
            "neg_logsumexp",
            lambda Z: -logsumexp(np.hstack([Z, -Z]), axis=1),
            strict=False,
            tested=True,
        ),
    ]


def entropy_functional(rule: ScoringRule) -> ConcaveFunctional:
    """Энтропия H^L(c) = L(c, c) правила; определена на симплексе."""
    return ConcaveFunctional(
        f"H:{rule.name}",
        lambda Z: np.asarray(entropy_rows(rule, Z)),
        strict=False,
        exact_capable=rule.exact_capable,
        tested=True,
    )


def check_concavity(
    F: ConcaveFunctional,
    points: np.ndarray,
    samples: int = 1000,
    seed: int = 0,
) -> ConcaveFunctional:
    """
    Проверяет вогнутость F по средним точкам отрезков внутри выпуклой
    оболочки points и возвращает F с отметкой tested.

    Raises:
        NotConcave: Нашелся отрезок с F(середина) < среднего значений на концах.
    """
    P = np.asarray(points, dtype=float).reshape(-1, np.asarray(points).shape[-1])
    rng = np.random.default_rng(seed)
    ends = rng.dirichlet(np.ones(P.shape[0]), size=(2, samples)) @ P
    left, right = ends[0], ends[1]
    mid = F((left + right) / 2)
    chord = (F(left) + F(right)) / 2
    scale = 1.0 + np.abs(chord)
    if np.any(np.asarray(mid, dtype=float) < np.asarray(chord, dtype=float) - 1e-12 * scale):
        raise NotConcave(f"Функция '{F.name}' не вогнута на выборке отрезков")
    return ConcaveFunctional(F.name, F.fn, F.strict, F.exact_capable, tested=True)


# --- Средние ---

def _weighted(weights: np.ndarray, values: np.ndarray):
    total = compensated_sum(weights * values)
    return total if isinstance(total, Fraction) else float(total)


def functionals(wm: WeightedMatrix, F: ConcaveFunctional) -> tuple:
    """
    (E_W(F), R_W(F), C_W(F)); строки и столбцы с нулевым весом пропускаются.
    """
    I, J = wm.shape
    points = wm.X.reshape(I * J, -1)
    E = _weighted(wm.W.ravel(), F(points))
    rows, cols = wm.row_active, wm.col_active
    R = _weighted(wm.row_weights[rows], F(wm.row_averages()[rows]))
    C = _weighted(wm.col_weights[cols], F(wm.col_averages()[cols]))
    return E, R, C


def _same_point(x: np.ndarray, y: np.ndarray) -> bool:
    if x.dtype == object and y.dtype == object:
        return all(a == b for a, b in zip(x.tolist(), y.tolist()))
    return bool(np.max(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))) <= BIN_VALUE_PRECISION)


def _constant(points: Sequence[np.ndarray]) -> bool:
    return all(_same_point(points[0], p) for p in points[1:])


def _point_key(p: np.ndarray) -> tuple:
    if p.dtype == object:
        return tuple(p.tolist())
    return tuple(np.round(np.asarray(p, dtype=float) / BIN_VALUE_PRECISION).astype(np.int64).tolist())


def distinct_entries(X: np.ndarray) -> int:
    """Число различных точек матрицы (точно в рациональном режиме)."""
    pts = X.reshape(-1, X.shape[-1])
    return len({_point_key(p) for p in pts})


@dataclass(frozen=True)
class Constancy:
    w_column_constant: bool
    w_row_constant: bool
    column_constant: bool
    row_constant: bool
    nondegenerate: bool
    distinct: int


def constancy(wm: WeightedMatrix) -> Constancy:
    """Предикаты постоянства столбцов и строк (на всей матрице и на носителе W)."""
    I, J = wm.shape
    support = wm.support
    X = wm.X
    column = all(_constant([X[i, j] for i in range(I)]) for j in range(J))
    row = all(_constant([X[i, j] for j in range(J)]) for i in range(I))
    w_column = all(
        _constant([X[i, j] for i in range(I) if support[i, j]])
        for j in range(J) if support[:, j].any()
    )
    w_row = all(
        _constant([X[i, j] for j in range(J) if support[i, j]])
        for i in range(I) if support[i].any()
    )
    count = distinct_entries(X)
    return Constancy(w_column, w_row, column, row, count > 2, count)


def _close(x, y, tol: float = SCORE_TOLERANCE) -> bool:
    if isinstance(x, Fraction) and isinstance(y, Fraction):
        return x == y
    return abs(float(x) - float(y)) <= tol


@dataclass(frozen=True)
class AverageInequalityReport:
    E: float | Fraction
    R: float | Fraction
    C: float | Fraction
    c_ge_e: bool
    r_ge_e: bool
    column_equality_matches: bool
    row_equality_matches: bool

    @property
    def consistent(self) -> bool:
        return self.c_ge_e and self.r_ge_e and self.column_equality_matches and self.row_equality_matches


def average_inequality_check(wm: WeightedMatrix, F: ConcaveFunctional | None = None) -> AverageInequalityReport:
    """
    Неравенства C_W(F) ≥ E_W(F), R_W(F) ≥ E_W(F) и, для строго вогнутой F,
    совпадение равенств с постоянством столбцов (строк) на носителе W.

    Raises:
        NotConcave: F не прошла проверку вогнутости.
    """
    F = F or quadratic_functional()
    if not F.tested:
        raise NotConcave(f"Функция '{F.name}' не проверена на вогнутость")
    E, R, C = functionals(wm, F)
    flags = constancy(wm)
    c_eq, r_eq = _close(C, E), _close(R, E)
    if F.strict:
        column_ok = c_eq == flags.w_column_constant
        row_ok = r_eq == flags.w_row_constant
    else:
        column_ok = c_eq or not flags.w_column_constant
        row_ok = r_eq or not flags.w_row_constant
    return AverageInequalityReport(
        E, R, C,
        c_ge_e=float(C) >= float(E) - SCORE_TOLERANCE,
        r_ge_e=float(R) >= float(E) - SCORE_TOLERANCE,
        column_equality_matches=column_ok,
        row_equality_matches=row_ok,
    )


# --- Выпуклая оболочка и выпуклый порядок ---

def in_convex_hull(point, points, tol: float = HULL_TOLERANCE) -> bool:
    """
    Принадлежность точки выпуклой оболочке конечного набора точек.

    Для m=1 в рациональном режиме сравнение точное; иначе решается
    задача линейной допустимости с невязками (scipy.optimize.linprog).

    Raises:
        OptimizerFailure: Решатель не завершился.
    """
    point = np.atleast_1d(np.asarray(point))
    P = np.atleast_2d(np.asarray(points))
    if P.shape[1] == 1 and point.dtype == object and P.dtype == object:
        values = P[:, 0].tolist()
        return min(values) <= point[0] <= max(values)
    P = np.asarray(P, dtype=float)
    x = np.asarray(point, dtype=float)
    n, m = P.shape
    # переменные: веса λ (n), невязки s+ (m), s- (m)
    cost = np.concatenate([np.zeros(n), np.ones(2 * m)])
    A_eq = np.vstack([
        np.hstack([P.T, np.eye(m), -np.eye(m)]),
        np.concatenate([np.ones(n), np.zeros(2 * m)])[None, :],
    ])
    b_eq = np.concatenate([x, [1.0]])
    result = optimize.linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if result.status != 0:
        raise OptimizerFailure(f"linprog: {result.message}")
    return bool(result.fun <= tol)


def hull_projection(point: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Ближайшая к point точка выпуклой оболочки points (SLSQP по весам)."""
    P = np.asarray(points, dtype=float)
    x = np.asarray(point, dtype=float)
    n = P.shape[0]
    if n == 1:
        return P[0].copy()
    if P.shape[1] == 1:
        return np.clip(x, P.min(axis=0), P.max(axis=0))

    def objective(lam: np.ndarray) -> float:
        diff = lam @ P - x
        return float(diff @ diff)

    def gradient(lam: np.ndarray) -> np.ndarray:
        return 2.0 * P @ (lam @ P - x)

    result = optimize.minimize(
        objective,
        np.full(n, 1.0 / n),
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1.0, "jac": lambda lam: np.ones(n)}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    if not result.success:
        raise OptimizerFailure(f"Проекция на оболочку не найдена: {result.message}")
    return result.x @ P


def rows_outside_hull(wm: WeightedMatrix) -> list[int]:
    """Строки с w_i· > 0, чье среднее r_i лежит вне conv{c_j : w_·j > 0}."""
    cols = wm.col_averages()[wm.col_active]
    rows = wm.row_averages()
    return [i for i in np.flatnonzero(wm.row_active) if not in_convex_hull(rows[i], cols)]


def convex_order_dominates(wm: WeightedMatrix) -> bool:
    """
    C_W(F) ≤ R_W(F) для всех вогнутых F: существует план T ≥ 0 с
    суммами строк w_i·, суммами столбцов w_·j и Σ_j T_ij c_j = w_i· r_i.

    Если X постоянна по столбцам на носителе W, план T = W годится сразу.

    Raises:
        OptimizerFailure: Решатель не завершился.
    """
    if constancy(wm).w_column_constant:
        return True
    rows, cols = np.flatnonzero(wm.row_active), np.flatnonzero(wm.col_active)
    r = np.asarray(wm.row_averages()[rows], dtype=float)
    c = np.asarray(wm.col_averages()[cols], dtype=float)
    wr = np.asarray(wm.row_weights[rows], dtype=float)
    wc = np.asarray(wm.col_weights[cols], dtype=float)
    I, J, m = len(rows), len(cols), c.shape[1]

    plan = I * J
    slack = I * m
    cost = np.concatenate([np.zeros(plan), np.ones(2 * slack)])
    blocks = []
    rhs = []
    for i in range(I):
        row = np.zeros(plan + 2 * slack)
        row[i * J:(i + 1) * J] = 1.0
        blocks.append(row)
        rhs.append(wr[i])
    for j in range(J):
        row = np.zeros(plan + 2 * slack)
        row[j:plan:J] = 1.0
        blocks.append(row)
        rhs.append(wc[j])
    for i, k in product(range(I), range(m)):
        row = np.zeros(plan + 2 * slack)
        row[i * J:(i + 1) * J] = c[:, k]
        row[plan + i * m + k] = 1.0
        row[plan + slack + i * m + k] = -1.0
        blocks.append(row)
        rhs.append(wr[i] * r[i, k])
    result = optimize.linprog(
        cost, A_eq=np.array(blocks), b_eq=np.array(rhs), bounds=(0, None), method="highs",
    )
    if result.status != 0:
        raise OptimizerFailure(f"linprog: {result.message}")
    return bool(result.fun <= HULL_TOLERANCE)


@dataclass(frozen=True)
class HingeWitness:
    """
    Разделяющая вогнутая функция: C_W(F_n) > R_W(F_n).

    Attributes:
        row (int): Строка, чье среднее вне оболочки столбцов.
        v (np.ndarray): Нормаль разделяющей гиперплоскости.
        alpha (float): Сдвиг: v·r_i > α > v·c_j.
        n (float): Первая степень десяти, при которой неравенство нарушено.
        functional (ConcaveFunctional): F_n.
    """
    row: int
    v: np.ndarray
    alpha: float
    n: float
    functional: ConcaveFunctional


def hinge_witness(wm: WeightedMatrix, max_power: int = 15) -> HingeWitness | None:
    """
    Для строки вне conv{c_j} строит F_n(z) = Q(z) − n·max(v·z − α, 0)²
    с v = r_i − proj(r_i) и α посередине между гиперплоскостью проекции
    и r_i; n перебирается по степеням десяти.
    """
    cols = np.asarray(wm.col_averages()[wm.col_active], dtype=float)
    rows = np.asarray(wm.row_averages(), dtype=float)
    for i in rows_outside_hull(wm):
        q = hull_projection(rows[i], cols)
        v = rows[i] - q
        margin = float(v @ v)
        alpha = float(v @ q) + margin / 2
        if margin <= 0 or float(np.max(cols @ v)) >= alpha:
            continue
        for power in range(max_power + 1):
            F = hinge_functional(v, alpha, 10.0 ** power)
            _, R, C = functionals(wm, F)
            if C > R:
                return HingeWitness(int(i), v, alpha, 10.0 ** power, F)
    return None


# --- Контрпримеры для матриц 2×2 ---

@dataclass(frozen=True)
class CounterexampleCase:
    """
    Классификация тройки a = X[0,0], b = X[0,1], d = X[1,0]
    (после перестановки строк и столбцов, чтобы игнорируемый элемент
    оказался в позиции (1,1)).

    Attributes:
        case (str): "A" при d ∉ (a, b), "B" при d ∈ (a, b).
        ignored (tuple[int, int]): Позиция игнорируемого элемента в исходной X.
        delta: Координата d на прямой a-b (d = δa + (1−δ)b) для случая B.
    """
    case: str
    ignored: tuple[int, int]
    delta: float | Fraction | None


def _arrangement(ignored: tuple[int, int]) -> tuple[list[int], list[int]]:
    p, q = ignored
    return [1 - p, p], [1 - q, q]


def classify_counterexample(X, tol: float = COLLINEARITY_TOLERANCE) -> CounterexampleCase:
    """
    Выбирает игнорируемый элемент 2×2 матрицы так, чтобы остальные три
    были различны, и определяет, лежит ли d на отрезке (a, b).

    Raises:
        DegenerateMatrix: Ни одна тройка элементов не состоит из различных точек.
        CollinearityMisclassified: Положение d относительно (a, b) не
            определяется на заданном допуске.
    """
    exact = _is_rational(np.array(X, dtype=object).ravel().tolist())
    pts = _as_points(X, exact)
    if pts.shape[:2] != (2, 2):
        raise LengthMismatch("Контрпример строится для матрицы 2×2")
    for ignored in ((1, 1), (1, 0), (0, 1), (0, 0)):
        rows, cols = _arrangement(ignored)
        a, b, d = pts[rows[0], cols[0]], pts[rows[0], cols[1]], pts[rows[1], cols[0]]
        if len({_point_key(a), _point_key(b), _point_key(d)}) < 3:
            continue
        ab = a - b
        lam = ((d - b) * ab).sum() / (ab * ab).sum()
        if exact:
            on_line = all(x == 0 for x in (d - (lam * a + (1 - lam) * b)).tolist())
            between = on_line and 0 < lam < 1
            return CounterexampleCase("B" if between else "A", ignored, lam if between else None)
        residual = float(np.linalg.norm(d - (lam * a + (1 - lam) * b)) / np.linalg.norm(ab))
        lam = float(lam)
        if residual > 1e3 * tol or lam < -tol or lam > 1 + tol:
            return CounterexampleCase("A", ignored, None)
        if residual <= tol and tol < lam < 1 - tol:
            return CounterexampleCase("B", ignored, lam)
        raise CollinearityMisclassified(
            f"Положение d относительно (a, b) не определено: невязка {residual:.3g}, λ = {lam:.3g}"
        )
    raise DegenerateMatrix("В матрице 2×2 нет трех различных элементов")


def case_b_gap(delta):
    """R_W(Q) − C_W(Q) в координатах прямой: δ(1−δ)(1+2δ)/(6(2+δ))."""
    return delta * (1 - delta) * (1 + 2 * delta) / (6 * (2 + delta))


def counterexample_weights(X, tol: float = COLLINEARITY_TOLERANCE) -> WeightedMatrix:
    """
    Веса W для 2×2 матрицы с тремя различными элементами, при которых
    C_W(Q) ≤ R_W(Q), но какое-то среднее строки лежит вне оболочки
    средних столбцов.

    Случай B (d ∈ (a, b)): W = [[1+2δ, 1−δ], [1+2δ, 0]] / (3(1+δ)).
    Случай A: W = [[(1−ε)/2, (1−ε)/2], [ε, 0]]; ε уменьшается вдвое,
    пока не выполнятся оба условия.

    Raises:
        DegenerateMatrix: Нет трех различных элементов.
        CollinearityMisclassified: Случай не определяется на допуске.
        OptimizerFailure: Подходящее ε не найдено.
    """
    case = classify_counterexample(X, tol)
    exact = _is_rational(np.array(X, dtype=object).ravel().tolist())
    rows, cols = _arrangement(case.ignored)

    def embed(local: list[list]) -> WeightedMatrix:
        W = np.empty((2, 2), dtype=object if exact else float)
        for i, j in product(range(2), range(2)):
            W[rows[i], cols[j]] = local[i][j]
        return weighted_matrix(X, W, exact=exact)

    if case.case == "B":
        delta = case.delta
        scale = 3 * (1 + delta)
        return embed([
            [(1 + 2 * delta) / scale, (1 - delta) / scale],
            [(1 + 2 * delta) / scale, 0 * delta],
        ])

    Q = quadratic_functional()
    eps = Fraction(1, 10) if exact else 0.1
    for _ in range(60):
        half = (1 - eps) / 2
        wm = embed([[half, half], [eps, 0 * eps]])
        _, R, C = functionals(wm, Q)
        if C < R and rows_outside_hull(wm):
            return wm
        eps = eps / 2
    raise OptimizerFailure("Не найдено ε для контрпримера случая A")


def constructed_counterexamples(X: np.ndarray) -> list[WeightedMatrix]:
    """Контрпримеры на всех подматрицах 2×2 с тремя различными элементами, вложенные в I×J."""
    I, J = X.shape[:2]
    exact = X.dtype == object
    found = []
    for (i1, i2), (j1, j2) in product(combinations(range(I), 2), combinations(range(J), 2)):
        sub = X[np.ix_([i1, i2], [j1, j2])]
        try:
            local = counterexample_weights(sub)
        except (DegenerateMatrix, CollinearityMisclassified, OptimizerFailure):
            continue
        W = np.zeros((I, J), dtype=object if exact else float)
        if exact:
            W[:] = Fraction(0)
        for (a, i), (b, j) in product(enumerate((i1, i2)), enumerate((j1, j2))):
            W[i, j] = local.W[a, b]
        found.append(weighted_matrix(X, W, exact=exact))
        if len(found) >= MAX_CONSTRUCTED:
            break
    return found


# --- Проверка эквивалентности (U1)-(U3) ---

def _sample_weights(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Веса Дирихле на случайном носителе (каждый элемент сохраняется с вероятностью из [0.3, 1))."""
    keep = rng.uniform(0.3, 1.0)
    mask = rng.random(shape) < keep
    if not mask.any():
        mask[tuple(rng.integers(0, s) for s in shape)] = True
    W = np.zeros(shape)
    W[mask] = rng.dirichlet(np.full(int(mask.sum()), 0.7))
    return W


def concave_battery(X: np.ndarray, seed: int) -> list[ConcaveFunctional]:
    """
    Q, гладкие функции с ограниченным градиентом и штрафные квадратичные
    F_n со случайными направлениями v и сдвигом α = медиана v·x_ij.
    """
    pts = np.asarray(X, dtype=float).reshape(-1, X.shape[-1])
    rng = np.random.default_rng(seed)
    battery = [quadratic_functional(), *smooth_functionals()]
    for _ in range(3):
        v = rng.normal(size=pts.shape[1])
        v /= np.linalg.norm(v) or 1.0
        alpha = float(np.median(pts @ v))
        battery.extend(hinge_functional(v, alpha, n) for n in HINGE_STRENGTHS)
    return battery


@dataclass
class TransferVerdict:
    """
    Итог случайного поиска по весам W.

    Attributes:
        trials (int): Число проверенных W (включая построенные).
        qualifying (int): W с C_W(Q) ≤ R_W(Q) + 1e-12.
        u1_violations / u2_violations / u3_violations (int): Найденные
            контрпримеры к каждому из утверждений.
        witnesses (int): Нарушения (U1), подтвержденные штрафной F_n.
        battery_conflicts (int): Расхождения батареи функций с решением ЛП.
    """
    trials: int = 0
    qualifying: int = 0
    u1_violations: int = 0
    u2_violations: int = 0
    u3_violations: int = 0
    witnesses: int = 0
    battery_conflicts: int = 0
    column_constant: bool = False
    row_constant: bool = False
    nondegenerate: bool = True

    @property
    def u1(self) -> bool:
        return self.u1_violations == 0

    @property
    def u2(self) -> bool:
        return self.u2_violations == 0

    @property
    def u3(self) -> bool:
        return self.u3_violations == 0

    @property
    def consistent(self) -> bool:
        """Все три утверждения согласованы; для не строчно-постоянных X - с постоянством столбцов."""
        agree = self.u1 == self.u2 == self.u3
        if self.row_constant:
            return agree and self.battery_conflicts == 0
        return agree and self.u1 == self.column_constant and self.battery_conflicts == 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "qualifying": self.qualifying,
            "u1": self.u1,
            "u2": self.u2,
            "u3": self.u3,
            "u1_violations": self.u1_violations,
            "u2_violations": self.u2_violations,
            "u3_violations": self.u3_violations,
            "witnesses": self.witnesses,
            "battery_conflicts": self.battery_conflicts,
            "column_constant": self.column_constant,
            "row_constant": self.row_constant,
            "nondegenerate": self.nondegenerate,
            "consistent": self.consistent,
        }


def _require_nondegenerate(flags: Constancy, allow_degenerate: bool) -> None:
    if flags.nondegenerate:
        return
    if not allow_degenerate:
        raise DegenerateMatrix(
            f"Матрица имеет {flags.distinct} различных элемента; эквивалентность не утверждается"
        )
    console.log(f"[yellow]Вырожденная матрица ({flags.distinct} различных элемента) принята по allow_degenerate[/]")


def _evaluate_u(wm: WeightedMatrix, battery: list[ConcaveFunctional], verdict: TransferVerdict) -> None:
    Q = battery[0]
    E, R, C = functionals(wm, Q)
    verdict.trials += 1
    if float(C) > float(R) + 1e-12:
        return
    verdict.qualifying += 1
    dominates = convex_order_dominates(wm)
    battery_values = [functionals(wm, F) for F in battery]
    battery_ok = all(c <= r + BOUND_TOLERANCE for _, r, c in battery_values)
    if dominates and not battery_ok:
        verdict.battery_conflicts += 1
    if not dominates:
        verdict.u1_violations += 1
        if hinge_witness(wm) is not None:
            verdict.witnesses += 1
    if not _close(C, E):
        verdict.u2_violations += 1
    if not (battery_ok and all(abs(c - e) <= BOUND_TOLERANCE for e, _, c in battery_values)):
        verdict.u3_violations += 1


def quadratic_transfer_check(
    X,
    trials: int = 1000,
    seed: int = 0,
    allow_degenerate: bool = False,
) -> TransferVerdict:
    """
    Случайный поиск контрпримеров к (U1) "из C(Q) ≤ R(Q) следует C(F) ≤ R(F)
    для всех вогнутых F", (U2) "из C(Q) ≤ R(Q) следует C(Q) = E(Q)" и (U3)
    "из C(Q) ≤ R(Q) следует C(F) = E(F) ≤ R(F)".

    Кроме случайных W (Дирихле на случайном носителе) проверяются
    построенные контрпримеры на подматрицах 2×2.

    Raises:
        DegenerateMatrix: Не более двух различных элементов без allow_degenerate.
    """
    exact = _is_rational(np.array(X, dtype=object).ravel().tolist())
    base = weighted_matrix(X, uniform_weights(np.array(X, dtype=object).shape[:2], exact), exact=exact)
    flags = constancy(base)
    _require_nondegenerate(flags, allow_degenerate)
    points = np.asarray(base.X, dtype=float)
    battery = concave_battery(points, seed)
    verdict = TransferVerdict(
        column_constant=flags.column_constant,
        row_constant=flags.row_constant,
        nondegenerate=flags.nondegenerate,
    )
    for wm in constructed_counterexamples(base.X):
        _evaluate_u(wm, battery, verdict)
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        _evaluate_u(WeightedMatrix(points, _sample_weights(rng, base.shape)), battery, verdict)
    return verdict


# --- Сценарий частот для калибровки ---

@dataclass
class FrequencyReport:
    """
    Флаги для идеально откалиброванного прогноза c (c = ā(·, d)).

    Attributes:
        forecasts (list[Dist]): Значения c по столбцам d.
        flags (dict): {правило: {calibeats, calibeats_joint, proper_calibeats, B_c, R_b}}.
        nondegenerate (bool): В матрице больше двух различных элементов.
        sweep (list[dict]): Строки для графиков по λ-перебору.
        sweep_summary (dict | None): Итоги перебора.
    """
    forecasts: list
    flags: dict
    nondegenerate: bool
    column_constant: bool
    sweep: list = field(default_factory=list)
    sweep_summary: dict | None = None

    def to_dict(self) -> dict:
        def encode(value):
            if isinstance(value, Fraction):
                return str(value)
            if isinstance(value, (np.floating, float)):
                return float(value)
            return value

        return {
            "forecasts": [[encode(w) for w in d.weights.tolist()] for d in self.forecasts],
            "flags": {name: {k: encode(v) for k, v in row.items()} for name, row in self.flags.items()},
            "nondegenerate": self.nondegenerate,
            "column_constant": self.column_constant,
            "sweep_summary": self.sweep_summary,
        }


def _matrix_of_dists(action_averages: Sequence[Sequence[Dist]]) -> np.ndarray:
    rows = [stack(list(row)) for row in action_averages]
    exact = any(r.dtype == object for r in rows)
    return np.array([np.asarray(r, dtype=object if exact else float) for r in rows], dtype=object if exact else float)


def _snapshot_flags(wm: WeightedMatrix, F: ConcaveFunctional, dominates: bool) -> dict:
    E, R, C = functionals(wm, F)
    return {
        "calibeats": bool(float(C) <= float(R) + SCORE_TOLERANCE),
        "calibeats_joint": bool(_close(C, E)),
        "proper_calibeats": dominates,
        "B_c": C,
        "R_b": R,
        "R_joint": E,
    }


def frequency_scenario(
    action_averages: Sequence[Sequence[Dist]],
    lam,
    rules: Sequence[ScoringRule],
    sweep_trials: int = 0,
    seed: int = 0,
    allow_degenerate: bool = False,
) -> FrequencyReport:
    """
    Строит идеально откалиброванный прогноз по матрице средних действий
    ā(b, d) и частотам λ(b, d) и для каждого правила сообщает: c
    превосходит b (C_W(H) ≤ R_W(H)), превосходит совместное разбиение
    (C_W(H) = E_W(H)) и превосходит b для всех собственных правил
    (выпуклый порядок).

    При sweep_trials > 0 перебираются случайные λ (и построенные
    контрпримеры) на той же матрице; проверяется, что "превзойти без
    совместного" и "превзойти без всех собственных" встречаются
    одновременно, а "совместное => все собственные" выполняется всегда.

    Raises:
        DegenerateMatrix: Перебор на матрице с ≤ 2 различными элементами
            без allow_degenerate.
    """
    X = _matrix_of_dists(action_averages)
    wm = weighted_matrix(X, lam, exact=X.dtype == object and _is_rational(np.array(lam, dtype=object).ravel().tolist()))
    action_set = action_averages[0][0].action_set
    flags_c = constancy(wm)
    forecasts = [trusted_dist(action_set, row) for row in wm.col_averages()[wm.col_active]]

    dominates = convex_order_dominates(wm)
    flags = {rule.name: _snapshot_flags(wm, entropy_functional(rule), dominates) for rule in rules}
    report = FrequencyReport(forecasts, flags, flags_c.nondegenerate, flags_c.column_constant)
    if sweep_trials <= 0:
        return report

    _require_nondegenerate(flags_c, allow_degenerate)
    Q = quadratic_functional()
    points = np.asarray(wm.X, dtype=float)
    candidates = [np.asarray(c.W, dtype=float) for c in constructed_counterexamples(wm.X)]
    rng = np.random.default_rng(seed)
    candidates.extend(_sample_weights(rng, wm.shape) for _ in range(sweep_trials))

    without_joint = without_proper = joint_not_proper = 0
    for trial, W in enumerate(candidates):
        trial_wm = WeightedMatrix(points, W)
        E, R, C = functionals(trial_wm, Q)
        calibeats = C <= R + 1e-12
        joint_ok = _close(C, E)
        proper = convex_order_dominates(trial_wm) if calibeats else False
        without_joint += calibeats and not joint_ok
        without_proper += calibeats and not proper
        joint_not_proper += joint_ok and calibeats and not proper
        report.sweep.append({
            "trial": trial,
            "lambda": ";".join(f"{w:.6g}" for w in W.ravel()),
            "C_minus_R": C - R,
            "C_minus_E": C - E,
            "calibeats": bool(calibeats),
            "calibeats_joint": bool(calibeats and joint_ok),
            "proper_calibeats": bool(proper),
        })
    report.sweep_summary = {
        "trials": len(candidates),
        "calibeat_without_joint": int(without_joint),
        "calibeat_without_proper": int(without_proper),
        "joint_without_proper": int(joint_not_proper),
        "equivalence_holds": (without_joint > 0) == (without_proper > 0) and joint_not_proper == 0,
        "asserted": flags_c.nondegenerate,
    }
    return report


def example1_snapshot(action_set: ActionSet | None = None, exact: bool = True) -> tuple[list[list[Dist]], list]:
    """
    Матрица ā(b, d) и частоты λ(b, d) таблицы из 10 периодов:
    b ∈ {1/5, 4/5}, d ∈ {0, 1/2, 1}.
    """
    action_set = action_set or ActionSet.binary()
    one = Fraction(1) if exact else 1.0
    scalars = [[0 * one, 0 * one, one], [0 * one, one, one]]
    averages = [[from_scalar(action_set, p) for p in row] for row in scalars]
    lam = [[Fraction(1, 10), Fraction(3, 10), Fraction(1, 10)]] * 2
    if not exact:
        lam = [[float(w) for w in row] for row in lam]
    return averages, lam

