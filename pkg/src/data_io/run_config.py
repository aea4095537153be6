# Файл: src/data_io/run_config.py
"""
Модуль конфигурации запусков.

RunConfig описывает параметры команд (правила, разбиения, процедуру,
противника, горизонты, зерна, δ, режим арифметики, пути вывода).
Конфигурация читается из JSON-объекта сценария; неизвестные ключи
отклоняются. Флаги командной строки перекрывают значения файла.
Хэш конфигурации - SHA-256 канонического JSON - попадает в каждый отчет.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

from config import DEFAULT_DELTA, DEFAULT_HORIZONS, DEFAULT_SEED
from src.calibeat_engine.errors import UnknownConfigKey, UnknownProcedure, UnknownStrategy
from src.calibeat_engine.procedures import PROCEDURES, REFERENCE_KINDS, STRATEGIES


@dataclass(frozen=True)
class RunConfig:
    """
    Параметры одного запуска команды.

    Attributes:
        rules (list[str]): Идентификаторы правил ("quadratic", "spherical:2", ...).
        binnings (list[str]): Имена разбиений транскрипта.
        procedure (str): "simple" | "multi" | "grid".
        adversary (str): Стратегия противника.
        pattern (list[str]): Шаблон действий для стратегии "pattern".
        reference (str): Вид эталона: "constant" | "cyclic" | "random".
        reference_bins (int): Число корзин эталона |B|.
        references (int): Число эталонов N (мультикалибровка).
        horizons (list[int]): Горизонты t.
        seeds (list[int]): Зерна.
        delta (float): Шаг сетки δ.
        exact (bool): Рациональная арифметика.
        utility (str | None): Идентификатор или путь к JSON полезности.
        brute_force (bool): Проверять регрет полным перебором.
        trials (int): Число случайных весов в поиске контрпримеров.
        allow_degenerate (bool): Разрешить матрицы с ≤ 2 различными элементами.
        out (str | None): Путь вывода.
        format (str): "json" | "csv".
    """
    rules: list = field(default_factory=lambda: ["quadratic"])
    binnings: list = field(default_factory=lambda: ["forecast"])
    procedure: str = "simple"
    adversary: str = "flip_farthest"
    pattern: list = field(default_factory=lambda: ["0", "1"])
    reference: str = "cyclic"
    reference_bins: int = 2
    references: int = 1
    horizons: list = field(default_factory=lambda: list(DEFAULT_HORIZONS))
    seeds: list = field(default_factory=lambda: [DEFAULT_SEED])
    delta: float = DEFAULT_DELTA
    exact: bool = False
    utility: str | None = None
    brute_force: bool = True
    trials: int = 1000
    allow_degenerate: bool = False
    out: str | None = None
    format: str = "json"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        """
        Строит конфигурацию из словаря (JSON-сценария).

        Raises:
            UnknownConfigKey: В словаре есть ключ, которого нет в схеме.
            UnknownProcedure: Неизвестная процедура.
            UnknownStrategy: Неизвестный противник или вид эталона.
        """
        known = {f.name for f in fields(cls)}
        # "comment" допускается как пояснение к сценарию, как в встроенных файлах
        unknown = sorted(set(data) - known - {"comment"})
        if unknown:
            raise UnknownConfigKey(f"Неизвестные ключи конфигурации: {', '.join(unknown)}")
        values = {k: v for k, v in data.items() if k in known}
        for key in ("rules", "binnings", "pattern", "horizons", "seeds"):
            if key in values and not isinstance(values[key], list):
                values[key] = [values[key]]
        return cls(**values).validated()

    def validated(self) -> "RunConfig":
        if self.procedure not in PROCEDURES:
            raise UnknownProcedure(f"Неизвестная процедура '{self.procedure}' (ожидалось: {', '.join(PROCEDURES)})")
        if self.adversary not in STRATEGIES:
            raise UnknownStrategy(f"Неизвестный противник '{self.adversary}' (ожидалось: {', '.join(STRATEGIES)})")
        if self.reference not in REFERENCE_KINDS:
            raise UnknownStrategy(f"Неизвестный вид эталона '{self.reference}' (ожидалось: {', '.join(REFERENCE_KINDS)})")
        return self

    def override(self, **flags) -> "RunConfig":
        """Значения флагов командной строки (кроме None) перекрывают файл."""
        changes = {k: v for k, v in flags.items() if v is not None}
        return replace(self, **changes).validated() if changes else self

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """SHA-256 канонического JSON (без путей вывода)."""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("out", "format")}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
