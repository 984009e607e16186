"""
Функции потерь, реконструкция и квадратичные разложения для C и S

Коэффициенты d и H получены как точные градиент и гессиан потерь,
ограниченных одним столбцом S (или C), в текущей точке:

    f(v) ~ const - d^T v + 1/2 v^T H v,  H = d2L/dv2,  d = H v0 - dL/dv(v0).
"""
from typing import Optional, Tuple, Union

import numpy as np

from app.core.errors import DimensionError, LikelihoodDomainError, ModeError
from app.core.schemas import (
    ArchetypalModel, DataMatrix, LikelihoodKind, QuadraticModel, SmoothedMatrix
)

MatrixLike = Union[DataMatrix, SmoothedMatrix, np.ndarray]


def _values(matrix: MatrixLike) -> np.ndarray:
    if isinstance(matrix, (DataMatrix, SmoothedMatrix)):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def _symmetrize(H: np.ndarray) -> np.ndarray:
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def check_kind(X: DataMatrix, kind: LikelihoodKind) -> None:
    """Бернулли допускает только бинарные данные"""
    if kind == LikelihoodKind.BERNOULLI and not X.is_binary:
        raise ModeError("bernoulli likelihood requires a binary data matrix")


def smooth(X: DataMatrix, epsilon: float) -> SmoothedMatrix:
    """P = X + eps - 2 X eps"""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must lie in [0, 0.5), got {epsilon}")
    x = _values(X)
    bad = (x != 0.0) & (x != 1.0)
    if bad.any():
        rows, cols = np.nonzero(bad)
        raise ModeError(
            f"cannot smooth non-binary value at row {rows[0] + 1}, column {cols[0] + 1}",
            row=int(rows[0]), column=int(cols[0]),
        )
    return SmoothedMatrix(values=x + epsilon - 2.0 * x * epsilon, epsilon=epsilon)


def likelihood_base(X: DataMatrix, kind: LikelihoodKind, epsilon: float) -> np.ndarray:
    """Матрица, из столбцов которой строятся архетипы: X или P"""
    check_kind(X, kind)
    if kind == LikelihoodKind.BERNOULLI:
        return smooth(X, epsilon).values
    return X.values


def reconstruct(base: MatrixLike, model: ArchetypalModel) -> np.ndarray:
    """R = base C S"""
    B = _values(base)
    if B.shape[1] != model.N:
        raise DimensionError(
            f"base has {B.shape[1]} observations but the model has N={model.N}"
        )
    return (B @ model.C) @ model.S


def _check_domain(R: np.ndarray) -> None:
    if not np.all((R > 0.0) & (R < 1.0)):
        raise LikelihoodDomainError(
            f"bernoulli reconstruction outside (0, 1): min={R.min():.3g}, max={R.max():.3g}"
        )


def loss(X: MatrixLike, R: np.ndarray, kind: LikelihoodKind) -> float:
    """Сумма поэлементных потерь (квадратичных или перекрестной энтропии)"""
    x = _values(X)
    R = np.asarray(R, dtype=np.float64)
    if x.shape != R.shape:
        raise DimensionError(f"X has shape {x.shape}, R has shape {R.shape}")

    if kind == LikelihoodKind.GAUSSIAN:
        value = float(np.sum((x - R) ** 2))
    else:
        _check_domain(R)
        value = float(-np.sum(x * np.log(R) + (1.0 - x) * np.log1p(-R)))

    if not np.isfinite(value):
        raise LikelihoodDomainError("loss is not finite")
    return value


def residual_derivatives(
    X: MatrixLike, R: np.ndarray, kind: LikelihoodKind
) -> Tuple[np.ndarray, np.ndarray]:
    """Поэлементные dL/dR и d2L/dR2"""
    x = _values(X)
    if kind == LikelihoodKind.GAUSSIAN:
        return 2.0 * (R - x), np.full_like(R, 2.0)

    _check_domain(R)
    grad = -x / R + (1.0 - x) / (1.0 - R)
    curvature = x / R ** 2 + (1.0 - x) / (1.0 - R) ** 2
    return grad, curvature


def s_quadratics(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    kind: LikelihoodKind,
    R: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Квадратичные модели для всех столбцов S сразу.

    Returns:
        H: K×K (общая матрица Грама, gaussian) или N×K×K (bernoulli)
        d: K×N, столбец j: линейный коэффициент для s_j
    """
    B = _values(base)
    A = B @ model.C
    if R is None:
        R = A @ model.S
    grad, curvature = residual_derivatives(X, R, kind)
    grad_S = A.T @ grad

    if kind == LikelihoodKind.GAUSSIAN:
        H = _symmetrize(2.0 * (A.T @ A))
        d = H @ model.S - grad_S
    else:
        H = _symmetrize(np.einsum("ik,ij,il->jkl", A, curvature, A, optimize=True))
        d = np.einsum("jkl,lj->kj", H, model.S) - grad_S
    return H, d


def s_quadratic(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    j: int,
    kind: LikelihoodKind,
) -> QuadraticModel:
    """Квадратичная модель потерь по столбцу s_j (длина K)"""
    B = _values(base)
    A = B @ model.C
    r_j = A @ model.S[:, j]
    x_j = _values(X)[:, [j]]
    grad, curvature = residual_derivatives(x_j, r_j[:, None], kind)

    H = _symmetrize(A.T @ (curvature[:, 0][:, None] * A))
    d = H @ model.S[:, j] - A.T @ grad[:, 0]
    return QuadraticModel(d=d, H=H, column_index=j)


def c_quadratic(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    k: int,
    kind: LikelihoodKind,
    R: Optional[np.ndarray] = None,
) -> QuadraticModel:
    """Квадратичная модель потерь по столбцу c_k (длина N), остальные столбцы фиксированы"""
    B = _values(base)
    if R is None:
        R = reconstruct(B, model)
    grad, curvature = residual_derivatives(X, R, kind)

    s_k = model.S[k]
    grad_c = B.T @ (grad @ s_k)
    weights = curvature @ (s_k ** 2)
    H = _symmetrize(B.T @ (weights[:, None] * B))
    d = H @ model.C[:, k] - grad_c
    return QuadraticModel(d=d, H=H, column_index=k)


def gradients_from_residual(
    base: MatrixLike, model: ArchetypalModel, grad_R: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """dL/dC = base^T G S^T, dL/dS = (base C)^T G"""
    B = _values(base)
    G_C = B.T @ (grad_R @ model.S.T)
    G_S = (B @ model.C).T @ grad_R
    return G_C, G_S


def factor_gradients(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    kind: LikelihoodKind,
    R: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Градиенты потерь по C (N×K) и S (K×N) для любого правдоподобия"""
    if R is None:
        R = reconstruct(base, model)
    grad, _ = residual_derivatives(X, R, kind)
    return gradients_from_residual(base, model, grad)


def bpcha_gradients(
    X: MatrixLike, P: MatrixLike, model: ArchetypalModel
) -> Tuple[np.ndarray, np.ndarray]:
    """Градиенты B-PCHA по C и S (знак как у градиента потерь)"""
    return factor_gradients(X, P, model, LikelihoodKind.BERNOULLI)
