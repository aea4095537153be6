# Файл: src/calibeat_engine/errors.py
"""
Иерархия исключений движка калибитинга.

Библиотечный код только выбрасывает исключения; решение о том, как
сообщить об ошибке пользователю, принимает вызывающий код (main.py).
Каждое семейство несет код завершения CLI: 2 - ошибка разбора,
3 - ошибка валидации, 4 - ошибка конфигурации.
"""


class CalibeatError(Exception):
    """Базовое исключение проекта."""
    exit_code = 1


class ParseError(CalibeatError):
    """Входные данные не удалось разобрать."""
    exit_code = 2


class ValidationError(CalibeatError):
    """Данные разобраны, но нарушают инварианты предметной области."""
    exit_code = 3


class ConfigError(CalibeatError):
    """Неизвестный идентификатор или ключ в конфигурации запуска."""
    exit_code = 4


# --- Ошибки разбора ---

class TranscriptParseError(ParseError):
    pass


# --- Ошибки валидации ---

class NegativeWeight(ValidationError):
    pass


class MassNotOne(ValidationError):
    pass


class ActionSetMismatch(ValidationError):
    pass


class UnknownLabel(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class ZeroTotalWeight(ValidationError):
    pass


class EmptySequence(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NonContiguousPeriods(ValidationError):
    pass


class NotARefinement(ValidationError):
    pass


class NotDeltaLocal(ValidationError):
    pass


class MissingConstant(ValidationError):
    pass


class BadAlpha(ValidationError):
    pass


class WrongArity(ValidationError):
    pass


class OptimizerFailure(ValidationError):
    pass


class GridMissing(ValidationError):
    pass


class DegenerateMatrix(ValidationError):
    pass


class CollinearityMisclassified(ValidationError):
    pass


class NotConcave(ValidationError):
    pass


# --- Ошибки конфигурации ---

class UnknownStrategy(ConfigError):
    pass


class UnknownProcedure(ConfigError):
    pass


class UnknownRule(ConfigError):
    pass


class UnknownConfigKey(ConfigError):
    pass
