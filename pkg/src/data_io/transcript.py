# Файл: src/data_io/transcript.py
"""
Модуль транскрипта: последовательности действий a_t, эталонных
прогнозов b_t и прогнозов c_t за t периодов.

Формат хранения - JSON-lines, по периоду на строку:
{"t": 1, "a": "1", "b": [0.2, 0.8], "c": [1.0, 0.0]}.
Необязательная первая строка-заголовок задает множество действий
и режим арифметики: {"action_set": ["0", "1"], "exact": true}.
В точном режиме числа записываются строками ("1/5"), чтобы
сохранить рациональные значения без потерь.

Поле "b" - либо распределение (список весов), либо метка корзины
(строка); "b_tuple" - кортеж меток нескольких эталонов; "bins" -
именованные разбиения: метка корзины или словарь {корзина: вес}.
Для |A|=2 поддерживается импорт CSV со скалярными столбцами t,a,b,c.
"""
import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from src.calibeat_engine.binning import (
    GeneralBinning,
    PureBinning,
    from_forecasts,
    general_binning,
    joint,
)
from src.calibeat_engine.errors import (
    EmptySequence,
    NonContiguousPeriods,
    TranscriptParseError,
)
from src.calibeat_engine.scores import reference_binning
from src.calibeat_engine.simplex import ActionSet, Dist, dist_new, from_scalar, to_fraction


@dataclass
class Transcript:
    """
    Записанный прогон: действия, эталон b, прогнозы c и разбиения.

    Attributes:
        action_set (ActionSet): Множество действий A.
        actions (list): Реализованные действия (метки или Dist).
        reference (list | None): b_t по периодам: Dist, метка или кортеж.
        forecasts (list[Dist] | None): Прогнозы c_t.
        binnings (dict): Именованные разбиения из поля "bins".
        exact (bool): Рациональный режим.
    """
    action_set: ActionSet
    actions: list
    reference: list | None = None
    forecasts: list | None = None
    binnings: dict = field(default_factory=dict)
    exact: bool = False

    def __len__(self) -> int:
        return len(self.actions)

    def forecast_binning(self) -> PureBinning:
        return from_forecasts(self._require_forecasts())

    def reference_binning(self) -> PureBinning:
        if self.reference is None:
            raise EmptySequence("В транскрипте нет эталонных прогнозов b")
        return reference_binning(self.reference)

    def joint_binning(self) -> PureBinning:
        return joint(self.reference_binning(), self.forecast_binning())

    def binning(self, name: str) -> PureBinning | GeneralBinning:
        """
        Разбиение по имени: "forecast" (c), "reference" (b), "joint" (b×c)
        или именованное разбиение из поля "bins".
        """
        builtin = {
            "forecast": self.forecast_binning,
            "c": self.forecast_binning,
            "reference": self.reference_binning,
            "b": self.reference_binning,
            "joint": self.joint_binning,
        }
        if name in builtin:
            return builtin[name]()
        if name not in self.binnings:
            raise TranscriptParseError(f"В транскрипте нет разбиения '{name}'")
        return self.binnings[name]

    def _require_forecasts(self) -> list:
        if not self.forecasts:
            raise EmptySequence("В транскрипте нет прогнозов c")
        return self.forecasts


# --- Разбор ---

def _number(value, exact: bool):
    if isinstance(value, bool):
        raise TranscriptParseError(f"Ожидалось число, получено {value!r}")
    if exact:
        try:
            return to_fraction(value)
        except (ValueError, ZeroDivisionError):
            raise TranscriptParseError(f"Некорректное число {value!r}") from None
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError):
            raise TranscriptParseError(f"Некорректное число {value!r}") from None
    if not isinstance(value, (int, float)):
        raise TranscriptParseError(f"Ожидалось число, получено {value!r}")
    return float(value)


def _dist(action_set: ActionSet, value: Any, exact: bool) -> Dist:
    if not isinstance(value, list):
        raise TranscriptParseError(f"Распределение должно быть списком весов: {value!r}")
    return dist_new(action_set, [_number(v, exact) for v in value], exact=exact)


def _bins(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise TranscriptParseError("Поле 'bins' должно быть объектом")
    maps = {}
    for name, value in raw.items():
        if isinstance(value, dict):
            maps[name] = value
        else:
            maps[name] = {tuple(value) if isinstance(value, list) else value: 1}
    return maps


def _normalize_bin_maps(maps: list[dict], exact: bool) -> list[dict]:
    return [{label: _number(w, exact) for label, w in m.items()} for m in maps]


def parse_jsonl(text: str) -> Transcript:
    """
    Разбирает транскрипт в формате JSON-lines.

    Raises:
        TranscriptParseError: Строка не является корректным JSON-объектом.
        EmptySequence: Нет ни одного периода.
        NonContiguousPeriods: Номера t не идут подряд с 1.
        UnknownLabel: Действие не принадлежит множеству действий.
    """
    lines = [line for line in text.splitlines() if line.strip()]
    records = []
    for number, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise TranscriptParseError(f"Строка {number}: некорректный JSON ({e.msg})") from None
        if not isinstance(record, dict):
            raise TranscriptParseError(f"Строка {number}: ожидался JSON-объект")
        records.append(record)

    action_set, exact = ActionSet.binary(), False
    if records and "t" not in records[0]:
        header = records.pop(0)
        labels = header.get("action_set", ["0", "1"])
        if not isinstance(labels, list):
            raise TranscriptParseError("Поле 'action_set' должно быть списком меток")
        action_set = ActionSet(tuple(labels))
        exact = bool(header.get("exact", False))
    if not records:
        raise EmptySequence("Транскрипт не содержит ни одного периода")

    actions, reference, forecasts, bin_maps = [], [], [], {}
    for expected, record in enumerate(records, start=1):
        if record.get("t") != expected:
            raise NonContiguousPeriods(f"Ожидался период t={expected}, получено t={record.get('t')!r}")
        if "a" not in record:
            raise TranscriptParseError(f"Период {expected}: нет поля 'a'")
        a = record["a"]
        if isinstance(a, list):
            actions.append(_dist(action_set, a, exact))
        else:
            action_set.index(a)
            actions.append(str(a))

        if "b_tuple" in record:
            reference.append(tuple(str(v) for v in record["b_tuple"]))
        elif "b" in record:
            b = record["b"]
            reference.append(_dist(action_set, b, exact) if isinstance(b, list) else str(b))
        else:
            reference.append(None)

        forecasts.append(_dist(action_set, record["c"], exact) if "c" in record else None)
        for name, value in _bins(record.get("bins", {})).items():
            bin_maps.setdefault(name, [None] * len(records))[expected - 1] = value

    return _assemble(action_set, exact, actions, reference, forecasts, bin_maps)


def _assemble(action_set, exact, actions, reference, forecasts, bin_maps) -> Transcript:
    binnings = {}
    for name, maps in bin_maps.items():
        if any(m is None for m in maps):
            raise TranscriptParseError(f"Разбиение '{name}' задано не для всех периодов")
        maps = _normalize_bin_maps(maps, exact)
        if all(len(m) == 1 and next(iter(m.values())) == 1 for m in maps):
            binnings[name] = PureBinning(tuple(next(iter(m)) for m in maps))
        else:
            binnings[name] = general_binning(maps, exact=exact)

    def complete(values: list) -> list | None:
        if all(v is None for v in values):
            return None
        if any(v is None for v in values):
            raise TranscriptParseError("Поле задано не для всех периодов")
        return values

    return Transcript(
        action_set=action_set,
        actions=actions,
        reference=complete(reference),
        forecasts=complete(forecasts),
        binnings=binnings,
        exact=exact,
    )


def parse_csv(text: str, exact: bool = False) -> Transcript:
    """
    Импорт CSV для |A|=2: столбцы t,a и необязательные b,c - вероятности
    действия "1".

    Raises:
        TranscriptParseError: Нет обязательных столбцов.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"t", "a"} <= set(reader.fieldnames):
        raise TranscriptParseError("CSV должен содержать столбцы t и a")
    action_set = ActionSet.binary()
    actions, reference, forecasts = [], [], []
    for expected, row in enumerate(reader, start=1):
        try:
            t = int(row["t"])
        except (TypeError, ValueError):
            raise TranscriptParseError(f"Строка {expected}: некорректный номер периода") from None
        if t != expected:
            raise NonContiguousPeriods(f"Ожидался период t={expected}, получено t={t}")
        label = row["a"].strip()
        action_set.index(label)
        actions.append(label)
        for column, target in (("b", reference), ("c", forecasts)):
            raw = (row.get(column) or "").strip()
            target.append(from_scalar(action_set, _number(raw, exact), exact=exact) if raw else None)
    if not actions:
        raise EmptySequence("CSV не содержит ни одного периода")
    return _assemble(action_set, exact, actions, reference, forecasts, {})


# --- Сериализация ---

def _encode_number(value, exact: bool):
    return str(to_fraction(value)) if exact else float(value)


def _encode_dist(d: Dist, exact: bool) -> list:
    return [_encode_number(w, exact) for w in d.weights.tolist()]


def _encode_bin_value(binning, period: int, exact: bool):
    if isinstance(binning, PureBinning):
        return binning.bin_ids[period]
    mask = binning.periods == period
    return {
        str(binning.labels[c]): _encode_number(w, exact)
        for c, w in zip(binning.codes[mask].tolist(), binning.weights[mask].tolist())
    }


def dumps_jsonl(transcript: Transcript) -> str:
    """Сериализует транскрипт в JSON-lines (с заголовком)."""
    exact = transcript.exact
    lines = [json.dumps({"action_set": list(transcript.action_set.labels), "exact": exact})]
    for s, a in enumerate(transcript.actions):
        record: dict[str, Any] = {"t": s + 1}
        record["a"] = _encode_dist(a, exact) if isinstance(a, Dist) else a
        if transcript.reference is not None:
            b = transcript.reference[s]
            if isinstance(b, Dist):
                record["b"] = _encode_dist(b, exact)
            elif isinstance(b, tuple):
                record["b_tuple"] = [str(v) for v in b]
            else:
                record["b"] = str(b)
        if transcript.forecasts is not None:
            record["c"] = _encode_dist(transcript.forecasts[s], exact)
        if transcript.binnings:
            record["bins"] = {
                name: _encode_bin_value(binning, s, exact)
                for name, binning in transcript.binnings.items()
            }
        lines.append(json.dumps(record, ensure_ascii=False))
    return "\n".join(lines) + "\n"
