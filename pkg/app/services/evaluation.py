"""
Стабильность решений (NMI между рестартами) и перебор числа архетипов
"""
import logging
import time
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.core.errors import ArchetypeError, DimensionError
from app.core.schemas import (
    DataMatrix, FitResult, LikelihoodKind, NmiNormalization, NmiReport,
    SolverConfig, SolverKind, SweepRow,
)
from app.services.background import background_job_service

logger = logging.getLogger(__name__)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(
    S_a: np.ndarray,
    S_b: np.ndarray,
    normalization: NmiNormalization = NmiNormalization.MAX,
) -> float:
    """
    Нормированная взаимная информация двух столбцово-стохастических матриц.

    Совместное распределение Q = S_a S_b^T / N; I(Q) делится на
    max(H_a, H_b) или на (H_a + H_b) / 2. Две вырожденные маргинали дают 1.
    """
    S_a = np.asarray(S_a, dtype=np.float64)
    S_b = np.asarray(S_b, dtype=np.float64)
    if S_a.ndim != 2 or S_b.ndim != 2 or S_a.shape[1] != S_b.shape[1]:
        raise DimensionError(
            f"assignment matrices must share N, got {S_a.shape} and {S_b.shape}"
        )
    N = S_a.shape[1]
    Q = (S_a @ S_b.T) / N
    p_a = Q.sum(axis=1)
    p_b = Q.sum(axis=0)

    mask = Q > 0
    outer = np.outer(p_a, p_b)
    mutual = float(np.sum(Q[mask] * np.log(Q[mask] / outer[mask])))

    h_a, h_b = _entropy(p_a), _entropy(p_b)
    if NmiNormalization(normalization) == NmiNormalization.MEAN:
        denominator = 0.5 * (h_a + h_b)
    else:
        denominator = max(h_a, h_b)
    if denominator <= 0.0:
        return 1.0
    return float(np.clip(mutual / denominator, 0.0, 1.0))


def nmi_report(
    S_list: Sequence[np.ndarray],
    normalization: NmiNormalization = NmiNormalization.MAX,
) -> NmiReport:
    """Попарные NMI между рестартами и среднее вне диагонали"""
    R = len(S_list)
    pairwise = np.eye(R)
    for a in range(R):
        for b in range(a + 1, R):
            pairwise[a, b] = pairwise[b, a] = nmi(S_list[a], S_list[b], normalization)
    mean_offdiag = 1.0 if R < 2 else float(pairwise[~np.eye(R, dtype=bool)].mean())
    return NmiReport(pairwise=pairwise, mean_offdiag=mean_offdiag)


class EvaluationService:
    """Перебор K с рестартами"""

    def sweep_k(
        self,
        X: DataMatrix,
        k_range: Iterable[int],
        kind: LikelihoodKind,
        solver: SolverKind,
        config: SolverConfig,
        on_row: Optional[Callable[[SweepRow, List[FitResult]], None]] = None,
    ) -> List[SweepRow]:
        """
        Для каждого K запускает рестарты и собирает строку таблицы.

        Ошибка одного K записывается в строку и не прерывает перебор.
        """
        ks = sorted(set(int(k) for k in k_range))
        if not ks:
            raise ValueError("k_range must not be empty")
        if ks[-1] > X.shape[1]:
            raise ValueError(f"K={ks[-1]} exceeds the number of observations N={X.shape[1]}")

        rows: List[SweepRow] = []
        for K in ks:
            started = time.perf_counter()
            results: List[FitResult] = []
            try:
                results = background_job_service.fit_restarts(X, K, kind, config, solver)
                report = nmi_report([r.model.S for r in results], config.nmi_normalization)
                row = SweepRow(
                    K=K,
                    best_loss=results[0].final_loss,
                    mean_nmi=report.mean_offdiag,
                    seconds=time.perf_counter() - started,
                )
                logger.info("sweep K=%d: best loss %.6g, mean NMI %.4f (%.1fs)",
                            K, row.best_loss, row.mean_nmi, row.seconds)
            except (ArchetypeError, ValidationError, ValueError, np.linalg.LinAlgError) as exc:
                logger.warning("sweep K=%d failed: %s", K, exc)
                row = SweepRow(
                    K=K, best_loss=float("nan"), mean_nmi=float("nan"),
                    seconds=time.perf_counter() - started, error=str(exc),
                )
            rows.append(row)
            if on_row is not None:
                on_row(row, results)
        return rows


evaluation_service = EvaluationService()
