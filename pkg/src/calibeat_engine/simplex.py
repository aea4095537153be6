# Файл: src/calibeat_engine/simplex.py
"""
Модуль конечных множеств действий и точек симплекса.

Содержит типы ActionSet и Dist, а также элементарные векторные операции,
которыми пользуются все остальные модули: евклидово расстояние, взвешенное
среднее с компенсированным суммированием, сборку матриц действий и
квазислучайную выборку точек симплекса.

Все вычисления векторизованы через numpy. Точный режим реализован
массивами dtype=object с элементами fractions.Fraction: тот же код
работает и с float, и с рациональными числами.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import qmc

from config import MASS_TOLERANCE
from .errors import (
    ActionSetMismatch,
    EmptyInput,
    LengthMismatch,
    MassNotOne,
    NegativeWeight,
    UnknownLabel,
    ZeroTotalWeight,
)


@dataclass(frozen=True)
class ActionSet:
    """
    Упорядоченное конечное множество действий A.

    Метка "1", если она есть, задает скалярную координату для |A|=2:
    распределение отождествляется с вероятностью действия "1".
    """
    labels: tuple[str, ...]
    _positions: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise EmptyInput("Множество действий не может быть пустым.")
        if len(set(labels)) != len(labels):
            raise ActionSetMismatch(f"Метки действий должны быть уникальны: {labels}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_positions", {label: i for i, label in enumerate(labels)})

    @classmethod
    def binary(cls) -> "ActionSet":
        return cls(("0", "1"))

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def scalar_index(self) -> int:
        return self._positions.get("1", self.size - 1)

    def index(self, label) -> int:
        try:
            return self._positions[str(label)]
        except KeyError:
            raise UnknownLabel(
                f"Действие '{label}' не принадлежит множеству {list(self.labels)}"
            ) from None


@dataclass(frozen=True, eq=False)
class Dist:
    """
    Точка симплекса Δ(A): неотрицательные веса с единичной суммой.

    Веса хранятся в неизменяемом numpy-массиве; dtype=object означает
    точный рациональный режим.
    """
    action_set: ActionSet
    weights: np.ndarray

    @property
    def exact(self) -> bool:
        return self.weights.dtype == object

    @property
    def scalar(self):
        """Вероятность действия "1" (скалярная координата для |A|=2)."""
        return self.weights[self.action_set.scalar_index]

    def key(self) -> tuple:
        return tuple(self.weights.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dist):
            return NotImplemented
        return self.action_set == other.action_set and self.key() == other.key()

    def __hash__(self) -> int:
        return hash((self.action_set, self.key()))

    def __repr__(self) -> str:
        parts = ", ".join(f"{label}: {w}" for label, w in zip(self.action_set.labels, self.weights.tolist()))
        return f"Dist({parts})"


def to_fraction(value) -> Fraction:
    """
    Переводит число в Fraction без двоичных артефактов.

    float переводится через десятичную запись (0.2 -> 1/5), строки
    допускают вид "1/5" и "0.25".
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    return Fraction(str(value).strip())


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def trusted_dist(action_set: ActionSet, weights: np.ndarray) -> Dist:
    """Создает Dist из уже проверенного массива (внутренние циклы процедур)."""
    return Dist(action_set, _frozen(np.array(weights, dtype=weights.dtype, copy=True)))


def dist_new(action_set: ActionSet, weights: Sequence, exact: bool | None = None) -> Dist:
    """
    Создает и проверяет распределение над множеством действий.

    Args:
        action_set (ActionSet): Множество действий A.
        weights (Sequence): Веса, по одному на действие.
        exact (bool | None): Принудительный точный режим. По умолчанию
            точный режим включается, если среди весов есть Fraction.

    Returns:
        Dist: Проверенное распределение.

    Raises:
        LengthMismatch: Число весов не равно |A|.
        NegativeWeight: Есть отрицательный вес (за пределами допуска).
        MassNotOne: Сумма весов отличается от 1 больше чем на 1e-12.
    """
    values = list(weights)
    if len(values) != action_set.size:
        raise LengthMismatch(f"Ожидалось {action_set.size} весов, получено {len(values)}")
    if exact is None:
        exact = any(isinstance(w, Fraction) for w in values)

    if exact:
        arr = np.array([to_fraction(w) for w in values], dtype=object)
        if any(w < 0 for w in arr):
            raise NegativeWeight(f"Отрицательный вес в {values}")
        if sum(arr, Fraction(0)) != 1:
            raise MassNotOne(f"Сумма весов {sum(arr, Fraction(0))} != 1")
        return Dist(action_set, _frozen(arr))

    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise MassNotOne(f"Нечисловые веса: {values}")
    if np.any(arr < -MASS_TOLERANCE):
        raise NegativeWeight(f"Отрицательный вес в {values}")
    total = math.fsum(arr)
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise MassNotOne(f"Сумма весов {total!r} != 1")
    arr = np.clip(arr, 0.0, None)
    return Dist(action_set, _frozen(arr / math.fsum(arr)))


def pure(action_set: ActionSet, label, exact: bool = False) -> Dist:
    """Единичный вектор действия `label`."""
    arr = np.zeros(action_set.size, dtype=object if exact else float)
    if exact:
        arr[:] = Fraction(0)
        arr[action_set.index(label)] = Fraction(1)
    else:
        arr[action_set.index(label)] = 1.0
    return Dist(action_set, _frozen(arr))


def barycenter(action_set: ActionSet, exact: bool = False) -> Dist:
    """Центр симплекса (равномерное распределение)."""
    if exact:
        arr = np.array([Fraction(1, action_set.size)] * action_set.size, dtype=object)
    else:
        arr = np.full(action_set.size, 1.0 / action_set.size)
    return Dist(action_set, _frozen(arr))


def from_scalar(action_set: ActionSet, p, exact: bool | None = None) -> Dist:
    """Для |A|=2 строит распределение с вероятностью p у действия "1"."""
    if action_set.size != 2:
        raise LengthMismatch("Скалярная координата определена только для |A|=2")
    weights = [None, None]
    if exact is None:
        exact = isinstance(p, Fraction)
    value = to_fraction(p) if exact else float(p)
    weights[action_set.scalar_index] = value
    weights[1 - action_set.scalar_index] = 1 - value
    return dist_new(action_set, weights, exact=exact)


def _same_action_set(x: Dist, y: Dist) -> None:
    if x.action_set != y.action_set:
        raise ActionSetMismatch(
            f"Разные множества действий: {x.action_set.labels} и {y.action_set.labels}"
        )


def squared_distance(x: Dist, y: Dist):
    """‖x−y‖² (точно в рациональном режиме)."""
    _same_action_set(x, y)
    diff = x.weights - y.weights
    return (diff * diff).sum()


def euclid_dist(x: Dist, y: Dist) -> float:
    """
    Евклидово расстояние ‖x−y‖₂ между точками симплекса.

    Raises:
        ActionSetMismatch: Точки заданы над разными множествами действий.
    """
    return math.sqrt(float(squared_distance(x, y)))


def compensated_sum(values: np.ndarray, axis: int | None = None):
    """
    Сумма с компенсацией ошибок округления (math.fsum) для float
    и точная сумма для dtype=object.
    """
    values = np.asarray(values)
    if values.dtype == object:
        if axis is None:
            return sum(values.ravel().tolist(), Fraction(0))
        return values.sum(axis=axis)
    if axis is None:
        return math.fsum(values.ravel())
    if values.shape[axis] == 0:
        return np.zeros(np.delete(values.shape, axis), dtype=float)
    return np.apply_along_axis(math.fsum, axis, values)


def running_average(points: Sequence[Dist], weights: Sequence | None = None) -> Dist:
    """
    Взвешенное среднее точек симплекса.

    Args:
        points (Sequence[Dist]): Непустая последовательность точек.
        weights (Sequence | None): Неотрицательные веса (по умолчанию равные).

    Returns:
        Dist: Выпуклая комбинация точек.

    Raises:
        EmptyInput: Пустой список точек.
        ZeroTotalWeight: Сумма весов равна нулю.
        NegativeWeight: Отрицательный вес.
    """
    pts = list(points)
    if not pts:
        raise EmptyInput("Нельзя усреднить пустую последовательность")
    action_set = pts[0].action_set
    for p in pts[1:]:
        _same_action_set(pts[0], p)
    matrix = stack(pts)

    if weights is None:
        w = np.ones(len(pts), dtype=object if matrix.dtype == object else float)
        if matrix.dtype == object:
            w[:] = Fraction(1)
    else:
        w_list = list(weights)
        if len(w_list) != len(pts):
            raise LengthMismatch("Число весов не совпадает с числом точек")
        if matrix.dtype == object or any(isinstance(v, Fraction) for v in w_list):
            w = np.array([to_fraction(v) for v in w_list], dtype=object)
            matrix = matrix.astype(object)
        else:
            w = np.asarray(w_list, dtype=float)
        if any(v < 0 for v in w):
            raise NegativeWeight("Веса усреднения должны быть неотрицательны")

    total = compensated_sum(w)
    if total == 0:
        raise ZeroTotalWeight("Сумма весов усреднения равна нулю")
    avg = compensated_sum(w[:, None] * matrix, axis=0) / total
    if avg.dtype != object:
        avg = np.clip(avg, 0.0, None)
    return Dist(action_set, _frozen(avg))


def stack(dists: Iterable[Dist]) -> np.ndarray:
    """Собирает последовательность Dist в матрицу (n, |A|)."""
    rows = [d.weights for d in dists]
    if not rows:
        return np.zeros((0, 0))
    exact = any(r.dtype == object for r in rows)
    return np.array(rows, dtype=object if exact else float)


def action_matrix(action_set: ActionSet, actions: Sequence, exact: bool = False) -> np.ndarray:
    """
    Матрица (t, |A|) реализованных действий: метки превращаются в единичные
    векторы, Dist берутся как есть.
    """
    items = list(actions)
    n = len(items)
    if all(not isinstance(a, Dist) for a in items):
        idx = np.fromiter((action_set.index(a) for a in items), dtype=np.int64, count=n)
        matrix = np.zeros((n, action_set.size), dtype=np.int64)
        matrix[np.arange(n), idx] = 1
    else:
        rows = []
        for a in items:
            if isinstance(a, Dist):
                if a.action_set != action_set:
                    raise ActionSetMismatch("Действие задано над другим множеством действий")
                rows.append(a.weights)
            else:
                row = np.zeros(action_set.size, dtype=np.int64)
                row[action_set.index(a)] = 1
                rows.append(row)
        matrix = np.array(rows, dtype=object) if exact else np.array(rows, dtype=float)
    if exact:
        exact_matrix = np.empty(matrix.shape, dtype=object)
        for index, value in np.ndenumerate(matrix):
            exact_matrix[index] = to_fraction(value)
        return exact_matrix
    return matrix.astype(float)


def is_exact(*arrays: np.ndarray) -> bool:
    return any(np.asarray(a).dtype == object for a in arrays)


def quasi_random_points(size: int, n: int, seed: int) -> np.ndarray:
    """
    Детерминированная квазислучайная выборка n точек симплекса размерности size.

    Точки последовательности Холтона из [0,1]^(size-1) сортируются,
    и промежутки между ними дают координаты точки симплекса.
    """
    if size == 1:
        return np.ones((n, 1))
    sampler = qmc.Halton(d=size - 1, scramble=True, seed=seed)
    cuts = np.sort(sampler.random(n), axis=1)
    padded = np.hstack([np.zeros((n, 1)), cuts, np.ones((n, 1))])
    return np.diff(padded, axis=1)
