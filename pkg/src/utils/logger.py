# Файл: src/utils/logger.py
"""
Общие консоли rich для библиотеки и командной строки.

'console' выводит отчеты, таблицы и заметные события вычислений
(переход от полного перебора к оптимуму по корзинам, принятая
вырожденная матрица, запуск длинной симуляции). 'error_console'
пишет в stderr сообщения об ошибках, чтобы они не смешивались
с результатами.
"""
from rich.console import Console

# Вывод отчетов и событий; подсветка чисел и JSON включена.
console = Console(highlight=True, color_system="auto")

# Сообщения об ошибках и трассировки (stderr).
error_console = Console(stderr=True, highlight=False, color_system="auto")
