"""
Исключения решателя
"""
from typing import Optional

import numpy as np


class ArchetypeError(Exception):
    """Базовая ошибка пакета"""


class DimensionError(ArchetypeError):
    """Несогласованные размеры матриц"""


class ModeError(ArchetypeError):
    """Данные не соответствуют режиму (например, не бинарные для bernoulli)"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateColumnError(ArchetypeError):
    """Столбец без положительных элементов нельзя нормировать на симплекс"""

    def __init__(self, column: int):
        super().__init__(f"column {column} has no strictly positive entry")
        self.column = column


class LikelihoodDomainError(ArchetypeError):
    """Реконструкция вне (0, 1) для бернуллиевского правдоподобия"""


class ActiveSetNonConvergence(ArchetypeError):
    """Active set не сошелся за отведенное число смен множества"""

    def __init__(self, best: np.ndarray, iterations: int):
        super().__init__(f"active set did not converge after {iterations} set changes")
        self.best = best
        self.iterations = iterations


class MatrixParseError(ArchetypeError):
    """Ошибка разбора файла матрицы"""

    def __init__(self, message: str, line: Optional[int] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class OutputExistsError(ArchetypeError):
    """Выходная директория не пуста, а --overwrite не задан"""
