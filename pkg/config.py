# Файл: config.py
"""
Конфигурационный файл проекта.

Содержит глобальные константы: допуски численных проверок, параметры
детерминированной выборки, значения по умолчанию для симуляций
и пути к встроенным данным.
"""
import os
from pathlib import Path

# Допуск проверки массы и неотрицательности распределений (Dist).
MASS_TOLERANCE = 1e-12

# Допуск для тождеств между оценками (разложение, регрет = калибровка).
SCORE_TOLERANCE = 1e-10

# Допуск для неравенств-оценок (ограниченность, Липшиц, границы процедур).
BOUND_TOLERANCE = 1e-9

# Точность, с которой прогнозы в режиме float считаются "одним значением".
BIN_VALUE_PRECISION = 1e-9

# Объем выборки пар (d, c) для проверки собственности правила в конструкторах.
PROPERNESS_SAMPLES = 2000

# Зерно квазислучайной выборки для проверок собственности и оценок констант.
PROPERNESS_SEED = 20240601

# Верхняя граница |X|^|I| для полного перебора отображений в регрете.
BRUTE_FORCE_LIMIT = 10**6

# Сколько индуцированных правил L^u держать в кэше.
INDUCED_RULE_CACHE_SIZE = 64

# Допуски геометрических проверок (коллинеарность, выпуклая оболочка).
COLLINEARITY_TOLERANCE = 1e-9
HULL_TOLERANCE = 1e-9

# Значения по умолчанию для симуляций.
DEFAULT_SEED = 12345
DEFAULT_HORIZONS = [100, 1_000, 10_000]
DEFAULT_DELTA = 0.1

# Число потоков для параллельных прогонов (ячейки правило x горизонт x зерно).
# Задается переменной окружения CALIBEAT_THREADS.
THREADS = max(1, int(os.environ.get("CALIBEAT_THREADS", "1") or 1))

# Каталог со встроенными транскриптами, сценариями и полезностями.
DATA_DIR = Path(__file__).resolve().parent / "data"
