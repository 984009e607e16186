"""
Эталонный решатель квадратичной задачи на симплексе и бенчмарк SMO

Эталон: ускоренный проекционный градиент (FISTA) с последующей
"полировкой": точным решением KKT-системы на найденном носителе.
"""
import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.schemas import QuadraticModel
from app.services.smo import iter_pair_updates, smo_pair_update

logger = logging.getLogger(__name__)

GAP_THRESHOLD = 1e-6
SUPPORT_TOLERANCE = 1e-12


def project_to_simplex(y: np.ndarray) -> np.ndarray:
    """Евклидова проекция на {x >= 0, sum x = 1} (сортировкой)"""
    y = np.asarray(y, dtype=np.float64)
    u = np.sort(y)[::-1]
    thresholds = (np.cumsum(u) - 1.0) / np.arange(1, y.shape[0] + 1)
    k = np.nonzero(thresholds < u)[0][-1]
    return np.maximum(y - thresholds[k], 0.0)


def _polish(q: QuadraticModel, x: np.ndarray) -> Optional[np.ndarray]:
    support = np.nonzero(x > SUPPORT_TOLERANCE)[0]
    n = support.size
    if n == 0:
        return None
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = q.H[np.ix_(support, support)]
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.concatenate([q.d[support], [1.0]])
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:n]
    if np.any(solution < 0):
        return None
    polished = np.zeros_like(x)
    polished[support] = solution
    return polished / polished.sum()


def simplex_qp_oracle(
    q: QuadraticModel, max_iterations: int = 20000, tolerance: float = 1e-15
) -> Tuple[np.ndarray, float]:
    """
    min -d^T s + 1/2 s^T H s  на симплексе.

    Returns:
        (решение, значение целевой функции)
    """
    K = q.size
    if K == 1:
        x = np.ones(1)
        return x, q.value(x)

    lipschitz = max(float(np.linalg.eigvalsh(q.H).max()), 1e-12)
    step = 1.0 / lipschitz
    x = np.full(K, 1.0 / K)
    y = x.copy()
    momentum = 1.0
    for _ in range(max_iterations):
        x_next = project_to_simplex(y - step * q.gradient(y))
        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x)
        if np.abs(x_next - x).max() <= tolerance:
            x = x_next
            break
        x, momentum = x_next, momentum_next

    best, best_value = x, q.value(x)
    polished = _polish(q, x)
    if polished is not None:
        value = q.value(polished)
        if value <= best_value:
            best, best_value = polished, value
    return best, best_value


def objective_gap(q: QuadraticModel, s: np.ndarray, optimum: float) -> float:
    """Относительный зазор (f(s) - f*) / (1 + |f*|)"""
    return (q.value(s) - optimum) / (1.0 + abs(optimum))


def pair_updates_to_threshold(
    q: QuadraticModel,
    s_init: np.ndarray,
    optimum: float,
    max_updates: int,
    threshold: float = GAP_THRESHOLD,
) -> Optional[int]:
    """Число парных обновлений до зазора <= threshold; None, если не достигнут"""
    s = np.asarray(s_init, dtype=np.float64)
    if objective_gap(q, s, optimum) <= threshold:
        return 0
    for count, pair in enumerate(iter_pair_updates(q.size, max_updates), start=1):
        s = smo_pair_update(q, s, pair)
        if objective_gap(q, s, optimum) <= threshold:
            return count
    return None


def random_instance(K: int, rng: np.random.Generator) -> QuadraticModel:
    """Случайная задача с положительно полуопределенной H и разреженным оптимумом"""
    A = rng.standard_normal((3 * K, K))
    H = A.T @ A
    s_star = rng.dirichlet(np.full(K, 0.5))
    d = H @ s_star + 0.1 * rng.standard_normal(K)
    return QuadraticModel(d=d, H=H)


def bench_smo(
    k_list: Sequence[int],
    trials: int,
    seed: int = 0,
    threshold: float = GAP_THRESHOLD,
    budget_factor: int = 10,
) -> pd.DataFrame:
    """
    Таблица: сколько парных обновлений нужно SMO, чтобы сравняться с эталоном.

    Колонки: K, trials, median_updates, max_updates, within_K2, within_2K2,
    unresolved, seconds.
    """
    rng = np.random.default_rng(seed)
    rows: List[dict] = []
    for K in k_list:
        started = time.perf_counter()
        limit = budget_factor * K * K
        counts = []
        for _ in range(trials):
            q = random_instance(K, rng)
            _, optimum = simplex_qp_oracle(q)
            counts.append(pair_updates_to_threshold(q, np.full(K, 1.0 / K), optimum, limit, threshold))

        resolved = np.array([c for c in counts if c is not None], dtype=float)
        rows.append({
            "K": K,
            "trials": trials,
            "median_updates": float(np.median(resolved)) if resolved.size else float("nan"),
            "max_updates": float(resolved.max()) if resolved.size else float("nan"),
            "within_K2": float(np.mean([c is not None and c <= K * K for c in counts])),
            "within_2K2": float(np.mean([c is not None and c <= 2 * K * K for c in counts])),
            "unresolved": sum(c is None for c in counts),
            "seconds": time.perf_counter() - started,
        })
        logger.info("bench K=%d: median %.0f pair updates, %.0f%% within K^2",
                    K, rows[-1]["median_updates"], 100 * rows[-1]["within_K2"])
    return pd.DataFrame(rows)
