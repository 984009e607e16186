"""
SMO для столбцов S: попарное перераспределение массы между архетипами

Для пары (a, b) масса t = s_a + s_b делится как s_a = t*alpha, s_b = t - s_a.
Вдоль направления e_a - e_b квадратичная модель: парабола по alpha,
минимум которой на [0, 1] находится в замкнутой форме.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Iterator, List, Optional, Tuple

import numpy as np

from app.core.config import resolve_threads
from app.core.schemas import PairUpdateState, QuadraticModel, SolverConfig

logger = logging.getLogger(__name__)

CURVATURE_FLOOR = 1e-14
_TINY = 1e-300


def pair_schedule(K: int) -> List[Tuple[int, int]]:
    """Лексикографический порядок пар a < b"""
    return list(combinations(range(K), 2))


def iter_pair_updates(K: int, limit: int) -> Iterator[Tuple[int, int]]:
    """Циклический обход пар, не более limit обновлений"""
    pairs = pair_schedule(K)
    if not pairs:
        return
    for n in range(limit):
        yield pairs[n % len(pairs)]


def _alpha_star(t, alpha0, slope, curvature):
    """
    Оптимальный alpha на [0, 1].

    slope = g_a - g_b (производная по массе, перенесенной с b на a),
    curvature = h_aa + h_bb - 2 h_ab.
    """
    t = np.asarray(t, dtype=np.float64)
    linear = curvature <= CURVATURE_FLOOR * t
    with np.errstate(divide="ignore", invalid="ignore"):
        unconstrained = alpha0 - slope / (t * curvature)
    boundary = np.where(slope < 0, 1.0, np.where(slope > 0, 0.0, alpha0))
    return np.clip(np.where(linear, boundary, unconstrained), 0.0, 1.0)


def pair_update_state(
    q: QuadraticModel, s: np.ndarray, pair: Tuple[int, int]
) -> PairUpdateState:
    """Вычисляет alpha* для пары без изменения s"""
    a, b = pair
    s = np.asarray(s, dtype=np.float64)
    t = float(s[a] + s[b])
    if t <= 0.0:
        return PairUpdateState(s=s, pair=(a, b), t=t, alpha=0.5)

    grad = q.gradient(s)
    curvature = q.H[a, a] + q.H[b, b] - 2.0 * q.H[a, b]
    alpha = float(_alpha_star(t, s[a] / t, grad[a] - grad[b], curvature))
    return PairUpdateState(s=s, pair=(a, b), t=t, alpha=alpha)


def smo_pair_update(q: QuadraticModel, s: np.ndarray, pair: Tuple[int, int]) -> np.ndarray:
    """Одно парное обновление; сумма элементов s сохраняется"""
    state = pair_update_state(q, s, pair)
    updated = np.array(s, dtype=np.float64, copy=True)
    if state.t <= 0.0:
        return updated

    a, b = pair
    new_a = state.t * state.alpha
    if new_a != updated[a]:
        updated[a] = new_a
        updated[b] = state.t - new_a
    return updated


def _objective(S: np.ndarray, G: np.ndarray, d: np.ndarray) -> np.ndarray:
    # f = -d^T s + 1/2 s^T H s = 1/2 s^T (G - d), где G = H s - d
    return 0.5 * np.sum(S * (G - d), axis=0)


def _gradient(H: np.ndarray, S: np.ndarray, d: np.ndarray) -> np.ndarray:
    if H.ndim == 2:
        return H @ S - d
    return np.einsum("jkl,lj->kj", H, S) - d


def column_objectives(H: np.ndarray, d: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Значение -d_j^T s_j + 1/2 s_j^T H_j s_j для каждого столбца"""
    return _objective(S, _gradient(H, S, d), d)


def _solve_block(
    H: np.ndarray, d: np.ndarray, S_init: np.ndarray, config: SolverConfig
) -> np.ndarray:
    S = np.array(S_init, dtype=np.float64, copy=True)
    K, N = S.shape
    pairs = pair_schedule(K)
    if not pairs or N == 0:
        return S

    shared = H.ndim == 2
    budget = config.smo_sweep_cap * K * K
    performed = 0
    active = np.ones(N, dtype=bool)

    while performed < budget and active.any():
        G = _gradient(H, S, d)
        f_start = _objective(S, G, d)

        for a, b in pairs:
            if performed >= budget:
                break
            performed += 1

            t = S[a] + S[b]
            if shared:
                curvature = H[a, a] + H[b, b] - 2.0 * H[a, b]
            else:
                curvature = H[:, a, a] + H[:, b, b] - 2.0 * H[:, a, b]
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha0 = np.where(t > 0, S[a] / np.where(t > 0, t, 1.0), 0.0)
            alpha = _alpha_star(t, alpha0, G[a] - G[b], curvature)

            new_a = t * alpha
            move = active & (t > 0) & (new_a != S[a])
            if not move.any():
                continue

            new_a = np.where(move, new_a, S[a])
            new_b = np.where(move, t - new_a, S[b])
            delta_a = new_a - S[a]
            delta_b = new_b - S[b]
            S[a] = new_a
            S[b] = new_b

            if shared:
                G += np.outer(H[:, a], delta_a) + np.outer(H[:, b], delta_b)
            else:
                G += H[:, :, a].T * delta_a + H[:, :, b].T * delta_b

        f_end = _objective(S, _gradient(H, S, d), d)
        settled = (f_start - f_end) <= config.smo_rel_tolerance * (np.abs(f_start) + _TINY)
        active &= ~settled

    return S


def smo_solve_columns(
    H: np.ndarray,
    d: np.ndarray,
    S_init: np.ndarray,
    config: SolverConfig,
    threads: Optional[int] = None,
) -> np.ndarray:
    """
    SMO для всех столбцов S одновременно.

    Args:
        H: K×K (общая) или N×K×K (своя для каждого столбца)
        d: K×N
        S_init: K×N, столбцы на симплексе
        threads: число потоков; None: из config, 0: число процессоров
    """
    threads = resolve_threads(config.threads if threads is None else threads)
    N = S_init.shape[1]
    if threads <= 1 or N < 2 * threads:
        return _solve_block(H, d, S_init, config)

    chunks = np.array_split(np.arange(N), threads)

    def _run(cols: np.ndarray) -> np.ndarray:
        block_H = H if H.ndim == 2 else H[cols]
        return _solve_block(block_H, d[:, cols], S_init[:, cols], config)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_run, chunks))
    return np.concatenate(parts, axis=1)


def smo_solve_column(q: QuadraticModel, s_init: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Решает задачу для одного столбца s на симплексе"""
    s = np.asarray(s_init, dtype=np.float64)
    if s.shape[0] == 1:
        return np.ones(1)
    solved = _solve_block(q.H, q.d[:, None], s[:, None], config)
    return solved[:, 0]
