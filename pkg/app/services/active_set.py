"""
Active set (FNNLS) для столбцов C со штрафом на сумму столбца

Решается  min  -(d + lam 1)^T c + 1/2 c^T (H + lam 11^T + eps I) c,  c >= 0,
где lam = lambda_scale * mean(H_AA^2), eps = eps_scale * lambda_scale * rms(H_AA)
пересчитываются при каждой смене активного множества A.

На A система (M + lam 11^T) c = d + lam 1, M = H_AA + eps I, решается через
формулу Шермана-Моррисона: c = M^-1 d + mu M^-1 1, mu = lam (1 - 1^T M^-1 d) / (1 + lam 1^T M^-1 1).
Так lam не попадает в факторизуемую матрицу.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.errors import ActiveSetNonConvergence
from app.core.schemas import ActiveSet, QuadraticModel, SolverConfig

logger = logging.getLogger(__name__)

_MACHINE_EPS = np.finfo(np.float64).eps


def penalty_weights(
    H: np.ndarray, indices: np.ndarray, lambda_scale: float, eps_scale: float
) -> Tuple[float, float]:
    """
    lam_k и eps_k по подматрице H_AA; откат на всю H, затем на lam = 1.

    lam_k = lambda_scale * mean(H_AA^2) в единицах H^2,
    eps_k = eps_scale * lambda_scale * rms(H_AA) в единицах H.
    """
    mean_square = 0.0
    if indices.size:
        mean_square = float(np.mean(H[np.ix_(indices, indices)] ** 2))
    if mean_square <= 0.0 and H.size:
        mean_square = float(np.mean(H ** 2))
    lam = lambda_scale * mean_square
    if lam <= 0.0:
        return 1.0, eps_scale
    return lam, eps_scale * lambda_scale * float(np.sqrt(mean_square))


def penalized_quadratic(
    q: QuadraticModel,
    lambda_scale: float,
    eps_scale: float,
    active: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """
    Расширенная система (d~, H~, lam_k, eps_k).

    active=None означает A = {все индексы}.
    """
    n = q.size
    indices = np.arange(n) if active is None else np.asarray(active, dtype=int)
    lam, eps = penalty_weights(q.H, indices, lambda_scale, eps_scale)
    d_tilde = q.d + lam
    H_tilde = q.H + lam * np.ones((n, n)) + eps * np.eye(n)
    return d_tilde, H_tilde, lam, eps


def _solve_on(
    H: np.ndarray, d: np.ndarray, idx: np.ndarray, lam: float, eps: float
) -> Tuple[np.ndarray, float]:
    """Решение на A и множитель штрафа mu = lam (1 - sum c)"""
    M = H[np.ix_(idx, idx)] + eps * np.eye(idx.size)
    rhs = np.column_stack([d[idx], np.ones(idx.size)])
    try:
        solved = cho_solve(cho_factor(M, lower=True, check_finite=False), rhs, check_finite=False)
    except LinAlgError:
        solved = np.linalg.lstsq(M, rhs, rcond=None)[0]
    u, v = solved[:, 0], solved[:, 1]
    mu = lam * (1.0 - u.sum()) / (1.0 + lam * v.sum())
    return u + mu * v, mu


def _objective(H: np.ndarray, d: np.ndarray, c: np.ndarray, lam: float, eps: float) -> float:
    return float(-d @ c + 0.5 * c @ H @ c + 0.5 * lam * (1.0 - c.sum()) ** 2 + 0.5 * eps * c @ c)


def solve_active_set(
    q: QuadraticModel,
    c_init: np.ndarray,
    config: SolverConfig,
) -> ActiveSet:
    """
    FNNLS с теплым стартом из носителя c_init.

    Raises:
        ActiveSetNonConvergence: превышен лимит смен активного множества
    """
    H, d = q.H, q.d
    n = q.size
    max_changes = config.active_set_max_changes or 3 * n
    scales = (config.active_set_lambda_scale, config.active_set_eps_scale)
    h_norm = float(np.abs(H).sum(axis=0).max(initial=0.0))
    d_norm = float(np.abs(d).max(initial=0.0))

    c_init = np.asarray(c_init, dtype=np.float64)
    c = np.where(c_init > 0, c_init, 0.0)
    passive = c > 0
    if not passive.any():
        lam, _ = penalty_weights(H, np.arange(n), *scales)
        passive[int(np.argmax(d + lam))] = True

    lam, eps = penalty_weights(H, np.nonzero(passive)[0], *scales)
    mu = 0.0
    changes = 0
    best = c.copy()
    best_value = np.inf

    def _reweight() -> None:
        nonlocal lam, eps
        lam, eps = penalty_weights(H, np.nonzero(passive)[0], *scales)

    def _check_budget() -> None:
        if changes > max_changes:
            raise ActiveSetNonConvergence(best=best.copy(), iterations=changes)

    while True:
        # Внутренний цикл: решение на P и отсечение неположительных компонент
        while True:
            idx = np.nonzero(passive)[0]
            z_idx, mu = _solve_on(H, d, idx, lam, eps)
            if np.all(z_idx > 0):
                c = np.zeros(n)
                c[idx] = z_idx
                break

            changes += 1
            _check_budget()
            z = np.zeros(n)
            z[idx] = z_idx
            bad = idx[z_idx <= 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.nan_to_num(c[bad] / (c[bad] - z[bad]), nan=0.0, posinf=0.0)
            pick = int(np.argmin(ratios))
            c = c + ratios[pick] * (z - c)
            drop = passive & (c <= 0)
            drop[bad[pick]] = True
            passive[drop] = False
            c[~passive] = 0.0
            if not passive.any():
                passive[int(np.argmax(d + lam))] = True
            _reweight()

        value = _objective(H, d, c, lam, eps)
        if value < best_value:
            best, best_value = c.copy(), value

        w = d - H @ c - eps * c + mu
        candidates = np.where(passive, -np.inf, w)
        entering = int(np.argmax(candidates))
        tolerance = 10.0 * _MACHINE_EPS * (h_norm + d_norm + abs(mu)) * n
        if candidates[entering] <= tolerance:
            break

        changes += 1
        _check_budget()
        passive[entering] = True
        _reweight()

    indices = np.nonzero(passive)[0]
    if indices.size > n / 2:
        logger.warning(
            "active set covers %d of %d observations; the C update is inefficient", indices.size, n
        )

    return ActiveSet(
        indices=indices.tolist(), solution=c, lambda_k=lam, epsilon_k=eps, iterations=changes
    )


def active_set_solve(q: QuadraticModel, c_init: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Неотрицательное решение штрафованной задачи для одного столбца C"""
    return np.array(solve_active_set(q, c_init, config).solution)
