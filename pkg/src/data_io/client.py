# Файл: src/data_io/client.py
"""
Модуль для чтения и записи файлов проекта.

Содержит класс TranscriptClient, который загружает транскрипты
(JSON-lines или CSV), сценарии симуляций, полезности и сценарии
для проверок строчных и столбцовых средних, а также записывает
отчеты. Ошибки ввода-вывода пробрасываются вызывающему коду;
ошибки формата превращаются в TranscriptParseError.
"""
import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from config import DATA_DIR
from src.calibeat_engine.decision import Utility, make_utility, threshold_utility
from src.calibeat_engine.errors import TranscriptParseError
from src.calibeat_engine.simplex import ActionSet, Dist, dist_new, from_scalar, to_fraction
from .run_config import RunConfig
from .transcript import Transcript, dumps_jsonl, parse_csv, parse_jsonl


@dataclass
class AppendixScenario:
    """
    Сценарий проверки строчных и столбцовых средних.

    kind = "frequency": матрица средних действий ā(b, d) и частоты λ(b, d);
    kind = "transfer": матрица точек X для случайного поиска по весам.
    """
    kind: str
    action_set: ActionSet | None = None
    action_averages: list | None = None
    frequencies: list | None = None
    X: list | None = None
    rules: list = field(default_factory=lambda: ["quadratic", "spherical:2"])
    sweep_trials: int = 0
    trials: int = 1000
    seed: int = 0
    allow_degenerate: bool = False
    comment: str = ""


def _rational(value):
    """Числа из JSON: строки "1/10" и целые - дроби, остальное - float."""
    if isinstance(value, bool):
        raise TranscriptParseError(f"Ожидалось число, получено {value!r}")
    if isinstance(value, (int, str)):
        try:
            return to_fraction(value)
        except (ValueError, ZeroDivisionError):
            raise TranscriptParseError(f"Некорректное число {value!r}") from None
    if isinstance(value, float):
        return value
    raise TranscriptParseError(f"Ожидалось число, получено {value!r}")


class TranscriptClient:
    """
    Клиент файлового ввода-вывода: транскрипты, сценарии, полезности, отчеты.
    """
    def __init__(self, data_dir: Path = DATA_DIR):
        """Инициализирует клиент с каталогом встроенных данных."""
        self.data_dir = Path(data_dir)

    def resolve(self, path: str | Path) -> Path:
        """Путь как есть, если файл существует; иначе - внутри каталога данных."""
        candidate = Path(path)
        if candidate.exists() or candidate.is_absolute():
            return candidate
        bundled = self.data_dir / candidate
        return bundled if bundled.exists() else candidate

    def read_text(self, path: str | Path) -> str:
        """
        Raises:
            OSError: Файл не найден или не читается.
        """
        return self.resolve(path).read_text(encoding="utf-8")

    def read_json(self, path: str | Path) -> Any:
        """
        Raises:
            OSError: Файл не читается.
            TranscriptParseError: Некорректный JSON.
        """
        text = self.read_text(path)
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise TranscriptParseError(f"{path}: некорректный JSON ({e.msg}, строка {e.lineno})") from None

    def load_transcript(self, path: str | Path, exact: bool = False) -> Transcript:
        """
        Загружает транскрипт; формат определяется расширением (.csv или JSON-lines).

        Args:
            path: Путь к файлу или имя встроенного файла.
            exact (bool): Рациональный режим для CSV (у JSON-lines - из заголовка).
        """
        text = self.read_text(path)
        if Path(path).suffix.lower() == ".csv":
            return parse_csv(text, exact=exact)
        return parse_jsonl(text)

    def load_scenarios(self, path: str | Path = "scenarios.json") -> dict[str, RunConfig]:
        """Именованные сценарии симуляций: {имя: RunConfig}."""
        raw = self.read_json(path)
        if not isinstance(raw, dict):
            raise TranscriptParseError("Файл сценариев должен содержать JSON-объект")
        return {name: RunConfig.from_mapping(body) for name, body in raw.items()}

    def load_run_config(self, path: str | Path) -> RunConfig:
        raw = self.read_json(path)
        if not isinstance(raw, dict):
            raise TranscriptParseError("Конфигурация должна быть JSON-объектом")
        return RunConfig.from_mapping(raw)

    def load_utility(self, ref: str | Path, action_set: ActionSet | None = None) -> Utility:
        """
        Полезность по идентификатору ("threshold") или из JSON-файла
        {"name", "action_set", "decisions", "payoffs", "tie_rule"}.
        """
        if str(ref) == "threshold":
            return threshold_utility(action_set)
        raw = self.read_json(ref)
        try:
            labels = raw.get("action_set")
            utility_set = ActionSet(tuple(labels)) if labels else (action_set or ActionSet.binary())
            payoffs = [[_rational(v) for v in row] for row in raw["payoffs"]]
            return make_utility(
                utility_set,
                raw["decisions"],
                payoffs,
                tie_rule=raw.get("tie_rule", "lowest"),
                name=raw.get("name", Path(str(ref)).stem),
            )
        except (KeyError, TypeError, AttributeError):
            raise TranscriptParseError(f"{ref}: полезность должна содержать 'decisions' и 'payoffs'") from None

    def load_appendix_scenario(self, path: str | Path) -> AppendixScenario:
        """
        Raises:
            TranscriptParseError: Неизвестный вид сценария или нет обязательных полей.
        """
        raw = self.read_json(path)
        if not isinstance(raw, dict):
            raise TranscriptParseError("Сценарий должен быть JSON-объектом")
        kind = raw.get("kind")
        if kind == "transfer":
            if "X" not in raw:
                raise TranscriptParseError(f"{path}: нет матрицы 'X'")
            return AppendixScenario(
                kind=kind,
                X=_rational_matrix(raw["X"]),
                trials=int(raw.get("trials", 1000)),
                seed=int(raw.get("seed", 0)),
                allow_degenerate=bool(raw.get("allow_degenerate", False)),
                comment=raw.get("comment", ""),
            )
        if kind == "frequency":
            if "action_averages" not in raw or "frequencies" not in raw:
                raise TranscriptParseError(f"{path}: нужны 'action_averages' и 'frequencies'")
            action_set = ActionSet(tuple(raw.get("action_set", ["0", "1"])))
            return AppendixScenario(
                kind=kind,
                action_set=action_set,
                action_averages=[[_average(action_set, v) for v in row] for row in raw["action_averages"]],
                frequencies=_rational_matrix(raw["frequencies"]),
                rules=list(raw.get("rules", ["quadratic", "spherical:2"])),
                sweep_trials=int(raw.get("sweep_trials", 0)),
                seed=int(raw.get("seed", 0)),
                allow_degenerate=bool(raw.get("allow_degenerate", False)),
                comment=raw.get("comment", ""),
            )
        raise TranscriptParseError(f"{path}: неизвестный вид сценария {kind!r} (ожидалось: frequency, transfer)")

    # --- Запись ---

    def write_text(self, path: str | Path, text: str) -> Path:
        """
        Raises:
            OSError: Каталог недоступен для записи.
        """
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        return target

    def write_json(self, path: str | Path, payload: Any) -> Path:
        return self.write_text(path, json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True, default=_encode) + "\n")

    def write_csv(self, path: str | Path, rows: list[dict], columns: list[str] | None = None) -> Path:
        return self.write_text(path, rows_to_csv(rows, columns))

    def write_transcript(self, path: str | Path, transcript: Transcript) -> Path:
        return self.write_text(path, dumps_jsonl(transcript))


def _rational_matrix(rows) -> list:
    if not isinstance(rows, list):
        raise TranscriptParseError("Матрица должна быть списком строк")
    return [[_rational_entry(v) for v in row] for row in rows]


def _rational_entry(value):
    if isinstance(value, list):
        return [_rational(v) for v in value]
    return _rational(value)


def _average(action_set: ActionSet, value) -> Dist:
    """Среднее действие: список весов или (при |A|=2) вероятность действия "1"."""
    if isinstance(value, list):
        weights = [_rational(v) for v in value]
        exact = all(isinstance(w, Fraction) for w in weights)
        return dist_new(action_set, weights, exact=exact)
    p = _rational(value)
    return from_scalar(action_set, p, exact=isinstance(p, Fraction))


def _encode(value):
    if isinstance(value, Fraction):
        return str(value)
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"Не сериализуется в JSON: {type(value).__name__}")


def rows_to_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    """CSV с фиксированным порядком столбцов и разделителем строк '\\n'."""
    columns = columns or (list(rows[0].keys()) if rows else [])
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (str(v) if isinstance(v, Fraction) else v) for k, v in row.items()})
    return buffer.getvalue()
