# Файл: src/calibeat_engine/binning.py
"""
Модуль последовательностей разбиения на корзины (binnings).

Чистое разбиение (PureBinning) относит каждый период к одной корзине,
общее (GeneralBinning) задает в каждом периоде распределение весов
f_s(i) по корзинам. Общее разбиение хранится разреженно: тройки
(период, индекс корзины, вес), что позволяет считать агрегаты по
корзинам одним вызовом np.add.at как для float, так и для Fraction.

Здесь же проверки отношений: измельчение (refinement), согласованность
с прогнозами и δ-локальность.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np

from config import BIN_VALUE_PRECISION, MASS_TOLERANCE
from .errors import LengthMismatch, MassNotOne, NegativeWeight, NotARefinement, NotDeltaLocal
from .simplex import Dist, stack, to_fraction


@dataclass(frozen=True)
class PureBinning:
    """Чистое разбиение: по одному идентификатору корзины i_s на период."""
    bin_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "bin_ids", tuple(self.bin_ids))

    def __len__(self) -> int:
        return len(self.bin_ids)

    def codes(self) -> tuple[np.ndarray, tuple]:
        """Коды корзин (в порядке первого появления) и список меток."""
        index: dict = {}
        codes = np.fromiter((index.setdefault(b, len(index)) for b in self.bin_ids), dtype=np.int64, count=len(self))
        return codes, tuple(index)

    def counts(self) -> dict:
        codes, labels = self.codes()
        totals = np.bincount(codes, minlength=len(labels))
        return {label: int(n) for label, n in zip(labels, totals)}


@dataclass(frozen=True, eq=False)
class GeneralBinning:
    """
    Общее (дробное) разбиение в разреженной форме.

    Attributes:
        length (int): Число периодов t.
        periods (np.ndarray): Номер периода каждой записи (0..t-1).
        codes (np.ndarray): Индекс корзины каждой записи.
        weights (np.ndarray): Вес f_s(i) каждой записи.
        labels (tuple): Идентификаторы корзин по индексам.
    """
    length: int
    periods: np.ndarray
    codes: np.ndarray
    weights: np.ndarray
    labels: tuple

    def __len__(self) -> int:
        return self.length

    @property
    def is_pure(self) -> bool:
        if self.periods.size != self.length:
            return False
        return bool(np.all(np.bincount(self.periods, minlength=self.length) == 1)) and all(
            w == 1 for w in self.weights.tolist()
        )

    def totals(self, dtype=None) -> np.ndarray:
        """n_t(i) = Σ_s f_s(i) для каждой корзины."""
        dtype = dtype or (object if self.weights.dtype == object else float)
        n = np.zeros(len(self.labels), dtype=dtype)
        if dtype == object:
            n[:] = Fraction(0)
        np.add.at(n, self.codes, self.weights)
        return n

    def as_pure(self) -> PureBinning:
        if not self.is_pure:
            raise NotARefinement("Разбиение не является чистым")
        order = np.argsort(self.periods, kind="stable")
        return PureBinning(tuple(self.labels[c] for c in self.codes[order]))


@dataclass(frozen=True)
class RefinementWitness:
    """Отображение корзин мелкого разбиения в корзины крупного."""
    mapping: Mapping[Hashable, Hashable] = field(default_factory=dict)


def as_general(binning: PureBinning | GeneralBinning) -> GeneralBinning:
    """Приводит чистое разбиение к разреженной общей форме (единичные веса)."""
    if isinstance(binning, GeneralBinning):
        return binning
    codes, labels = binning.codes()
    n = len(binning)
    return GeneralBinning(
        length=n,
        periods=np.arange(n, dtype=np.int64),
        codes=codes,
        weights=np.ones(n, dtype=np.int64),
        labels=labels,
    )


def general_binning(maps: Sequence[Mapping[Hashable, object]], exact: bool | None = None) -> GeneralBinning:
    """
    Строит общее разбиение из последовательности словарей {корзина: вес}.

    Raises:
        NegativeWeight: Отрицательный вес.
        MassNotOne: Веса периода не суммируются в 1 (допуск 1e-12).
    """
    maps = list(maps)
    if exact is None:
        exact = any(isinstance(w, Fraction) for m in maps for w in m.values())
    index: dict = {}
    periods, codes, weights = [], [], []
    for s, fs in enumerate(maps):
        values = [to_fraction(w) if exact else float(w) for w in fs.values()]
        if any(v < 0 for v in values):
            raise NegativeWeight(f"Отрицательный вес корзины в периоде {s + 1}")
        total = sum(values, Fraction(0)) if exact else math.fsum(values)
        if (exact and total != 1) or (not exact and abs(total - 1.0) > MASS_TOLERANCE):
            raise MassNotOne(f"Веса корзин периода {s + 1} суммируются в {total}")
        for label, v in zip(fs.keys(), values):
            periods.append(s)
            codes.append(index.setdefault(label, len(index)))
            weights.append(v)
    return GeneralBinning(
        length=len(maps),
        periods=np.asarray(periods, dtype=np.int64),
        codes=np.asarray(codes, dtype=np.int64),
        weights=np.array(weights, dtype=object if exact else float),
        labels=tuple(index),
    )


def from_forecasts(forecasts: Sequence[Dist], value_tolerance: float = BIN_VALUE_PRECISION) -> PureBinning:
    """
    Стандартное разбиение по значению прогноза: i_s = c_s.

    В точном режиме корзины - классы точного равенства, в режиме float
    значения округляются с точностью value_tolerance.
    """
    C = stack(forecasts)
    if C.size == 0:
        return PureBinning(())
    if C.dtype == object:
        return PureBinning(tuple(tuple(row) for row in C.tolist()))
    decimals = max(0, int(round(-math.log10(value_tolerance))))
    rounded = np.round(C, decimals) + 0.0
    return PureBinning(tuple(tuple(row) for row in rounded.tolist()))


def joint(b: PureBinning, c: PureBinning) -> PureBinning:
    """
    Совместное разбиение b×c: корзина - пара (b_s, c_s).

    Raises:
        LengthMismatch: Разбиения разной длины.
    """
    if len(b) != len(c):
        raise LengthMismatch(f"Длины разбиений различаются: {len(b)} и {len(c)}")
    return PureBinning(tuple(zip(b.bin_ids, c.bin_ids)))


def joint_many(binnings: Sequence[PureBinning]) -> PureBinning:
    """Совместное разбиение b¹×…×b^N с кортежами в качестве корзин."""
    binnings = list(binnings)
    if not binnings:
        raise LengthMismatch("Нужно хотя бы одно разбиение")
    if len(binnings) == 1:
        return binnings[0]
    lengths = {len(b) for b in binnings}
    if len(lengths) != 1:
        raise LengthMismatch(f"Длины разбиений различаются: {sorted(lengths)}")
    return PureBinning(tuple(zip(*(b.bin_ids for b in binnings))))


def projection_witness(joint_binning: PureBinning, position: int) -> RefinementWitness:
    """Свидетель измельчения joint -> его координата `position`."""
    return RefinementWitness({label: label[position] for label in set(joint_binning.bin_ids)})


def total_witness(fine: PureBinning | GeneralBinning, coarse_id: Hashable = "all") -> RefinementWitness:
    """Свидетель измельчения fine -> одна общая корзина."""
    return RefinementWitness({label: coarse_id for label in as_general(fine).labels})


def single_bin(length: int, bin_id: Hashable = "all") -> PureBinning:
    return PureBinning((bin_id,) * length)


def _group_sum(keys: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.zeros(uniq.size, dtype=object if weights.dtype == object else float)
    if sums.dtype == object:
        sums[:] = Fraction(0)
    np.add.at(sums, inverse.ravel(), weights)
    return uniq, sums


def check_refines(
    fine: PureBinning | GeneralBinning,
    coarse: PureBinning | GeneralBinning,
    witness: RefinementWitness,
) -> bool:
    """
    Проверяет, что fine измельчает coarse: g_s(j) = Σ_{i∈I(j)} f_s(i)
    в каждом периоде (точно или с допуском 1e-12).

    Raises:
        LengthMismatch: Разбиения разной длины.
    """
    f, g = as_general(fine), as_general(coarse)
    if len(f) != len(g):
        raise LengthMismatch(f"Длины разбиений различаются: {len(f)} и {len(g)}")
    coarse_index = {label: j for j, label in enumerate(g.labels)}
    try:
        target = np.array([coarse_index[witness.mapping[label]] for label in f.labels], dtype=np.int64)
    except KeyError:
        return False
    width = max(len(g.labels), 1)
    fine_keys, fine_sums = _group_sum(f.periods * width + target[f.codes], f.weights)
    coarse_keys, coarse_sums = _group_sum(g.periods * width + g.codes, g.weights)

    keys = np.union1d(fine_keys, coarse_keys)
    exact = fine_sums.dtype == object or coarse_sums.dtype == object
    lhs = np.zeros(keys.size, dtype=object if exact else float)
    rhs = np.zeros(keys.size, dtype=object if exact else float)
    lhs[np.searchsorted(keys, fine_keys)] = fine_sums
    rhs[np.searchsorted(keys, coarse_keys)] = coarse_sums
    gap = np.abs(lhs - rhs).tolist()
    return all(v <= MASS_TOLERANCE if isinstance(v, float) else v == 0 for v in gap)


def supported_entries(binning: GeneralBinning) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mask = np.array([w > 0 for w in binning.weights.tolist()], dtype=bool)
    return binning.periods[mask], binning.codes[mask], binning.weights[mask]


def is_forecast_measurable(
    binning: PureBinning | GeneralBinning,
    forecasts: Sequence[Dist],
    value_tolerance: float = BIN_VALUE_PRECISION,
) -> bool:
    """
    Проверяет, что все прогнозы с положительным весом в одной корзине
    совпадают (i_s = i_r влечет c_s = c_r).
    """
    g = as_general(binning)
    C = stack(forecasts)
    if len(g) != C.shape[0]:
        raise LengthMismatch(f"Длина разбиения {len(g)} != числу прогнозов {C.shape[0]}")
    periods, codes, _ = supported_entries(g)
    if periods.size == 0:
        return True
    _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    reference = C[periods[first[inverse.ravel()]]]
    gap = np.abs(C[periods] - reference)
    if gap.dtype == object:
        return all(v == 0 for v in gap.ravel().tolist())
    return bool(np.max(gap) <= value_tolerance)


def check_delta_local(
    f: PureBinning | GeneralBinning,
    forecasts: Sequence[Dist],
    delta: float,
    centers: Mapping[Hashable, Dist] | None = None,
) -> bool:
    """
    Проверяет δ-локальность: для каждой корзины все прогнозы периодов
    с f_s(i) > 0 лежат в открытом шаре радиуса δ вокруг общего центра.

    Без явных центров центром корзины берется ее взвешенный средний
    прогноз c̄(i); при заданных центрах y^i проверяются именно они.
    """
    if not delta > 0:
        raise NotDeltaLocal("delta должно быть положительным")
    g = as_general(f)
    C = np.asarray(stack(forecasts), dtype=float)
    if len(g) != C.shape[0]:
        raise LengthMismatch(f"Длина разбиения {len(g)} != числу прогнозов {C.shape[0]}")
    periods, codes, weights = supported_entries(g)
    if periods.size == 0:
        return True
    points = C[periods]

    if centers is not None:
        try:
            center_rows = np.array([np.asarray(centers[label].weights, dtype=float) for label in g.labels])
        except KeyError:
            return False
    else:
        w = np.asarray(weights, dtype=float)
        mass = np.zeros(len(g.labels))
        sums = np.zeros((len(g.labels), C.shape[1]))
        np.add.at(mass, codes, w)
        np.add.at(sums, codes, w[:, None] * points)
        center_rows = sums / np.where(mass > 0, mass, 1.0)[:, None]

    distances = np.linalg.norm(points - center_rows[codes], axis=1)
    return bool(np.all(distances < delta))


def grid_binning(forecasts: Sequence[Dist], width: float, offset: float = 0.0) -> PureBinning:
    """Чистое сеточное разбиение: корзина - клетка floor((c + offset)/width)."""
    C = np.asarray(stack(forecasts), dtype=float)
    cells = np.floor((C + offset) / width).astype(np.int64)
    return PureBinning(tuple(tuple(row) for row in cells.tolist()))


def smoothed_grid_binning(forecasts: Sequence[Dist], width: float, share: float = 0.5) -> GeneralBinning:
    """
    Дробное сеточное разбиение: вес `share` уходит в клетку основной сетки,
    остаток - в клетку сетки, сдвинутой на полшага.
    """
    primary = grid_binning(forecasts, width)
    shifted = grid_binning(forecasts, width, offset=width / 2)
    maps = [
        {("main", p): share, ("shift", q): 1.0 - share}
        for p, q in zip(primary.bin_ids, shifted.bin_ids)
    ]
    return general_binning(maps, exact=False)
