"""
Проверка допустимости и нормировка столбцов на симплекс
"""
import numpy as np

from app.core.errors import DegenerateColumnError
from app.core.schemas import ArchetypalModel, ValidationReport, Violation

COLUMN_SUM_TOLERANCE = 1e-9


def _matrix_violations(name: str, matrix: np.ndarray) -> list:
    violations = []

    finite = np.isfinite(matrix)
    for row, col in zip(*np.nonzero(~finite)):
        violations.append(Violation(
            matrix=name, column=int(col), row=int(row), kind="non_finite", magnitude=float("inf")
        ))

    negative = finite & (matrix < 0)
    for row, col in zip(*np.nonzero(negative)):
        violations.append(Violation(
            matrix=name, column=int(col), row=int(row), kind="negative",
            magnitude=float(-matrix[row, col]),
        ))

    deficits = 1.0 - np.where(finite, matrix, 0.0).sum(axis=0)
    for col in np.nonzero(np.abs(deficits) > COLUMN_SUM_TOLERANCE)[0]:
        violations.append(Violation(
            matrix=name, column=int(col), kind="column_sum", magnitude=float(deficits[col])
        ))

    return violations


def validate_model(model: ArchetypalModel) -> ValidationReport:
    """
    Сообщает обо всех нарушенных ограничениях модели.

    Для column_sum magnitude = 1 - сумма столбца (дефицит, может быть
    отрицательным при избытке).
    """
    return ValidationReport(
        violations=_matrix_violations("C", model.C) + _matrix_violations("S", model.S)
    )


def project_columns_to_simplex(matrix: np.ndarray) -> np.ndarray:
    """Делит каждый столбец неотрицательной матрицы на его сумму"""
    matrix = np.asarray(matrix, dtype=np.float64)
    sums = matrix.sum(axis=0)
    degenerate = np.nonzero(~(matrix > 0).any(axis=0))[0]
    if degenerate.size:
        raise DegenerateColumnError(int(degenerate[0]))
    return matrix / sums


def renormalize_or_reset(matrix: np.ndarray) -> np.ndarray:
    """Как project_columns_to_simplex, но нулевые столбцы заменяются равномерными"""
    matrix = np.maximum(np.asarray(matrix, dtype=np.float64), 0.0)
    sums = matrix.sum(axis=0)
    empty = sums <= 0
    if empty.any():
        matrix = matrix.copy()
        matrix[:, empty] = 1.0 / matrix.shape[0]
        sums = np.where(empty, 1.0, sums)
    return matrix / sums
