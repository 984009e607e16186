"""
Сервис фонового выполнения рестартов и ячеек перебора K

Задачи: независимые синхронные функции; они запускаются в потоках через
asyncio.to_thread, одновременно не более threads штук.
"""
import asyncio
import logging
from typing import Callable, Coroutine, Any, List, Optional, Sequence, TypeVar

from app.core.config import resolve_threads
from app.core.schemas import (
    ArchetypalModel, DataMatrix, FitResult, LikelihoodKind, SolverConfig, SolverKind
)
from app.services.driver import fit_driver_service
from app.services.pcha import pcha_service

logger = logging.getLogger(__name__)

T = TypeVar("T")


def fit(
    X: DataMatrix,
    K: int,
    kind: LikelihoodKind,
    config: SolverConfig,
    solver: SolverKind = SolverKind.SMO_AS,
    seed: Optional[int] = None,
    restart_id: int = 0,
    init: Optional[ArchetypalModel] = None,
) -> FitResult:
    """Один запуск выбранной схемы вывода"""
    if solver == SolverKind.PCHA:
        return pcha_service.fit_pcha(X, K, kind, config, seed=seed, restart_id=restart_id, init=init)
    return fit_driver_service.fit_smo_as(X, K, kind, config, seed=seed, restart_id=restart_id, init=init)


class BackgroundJobService:
    """Запуск независимых задач с ограничением параллелизма"""

    async def run_jobs(self, jobs: Sequence[Callable[[], T]], threads: int = 0) -> List[T]:
        """Выполняет задачи в потоках; порядок результатов совпадает с порядком задач"""
        semaphore = asyncio.Semaphore(resolve_threads(threads))

        async def _run(job: Callable[[], T]) -> T:
            async with semaphore:
                return await asyncio.to_thread(job)

        return list(await asyncio.gather(*(_run(job) for job in jobs)))

    def run_jobs_sync(self, jobs: Sequence[Callable[[], T]], threads: int = 0) -> List[T]:
        return _run_sync(self.run_jobs(jobs, threads))

    async def fit_restarts_async(
        self,
        X: DataMatrix,
        K: int,
        kind: LikelihoodKind,
        config: SolverConfig,
        solver: SolverKind = SolverKind.SMO_AS,
    ) -> List[FitResult]:
        """
        Рестарты с seed, seed+1, ..., seed+restarts-1.

        Returns:
            Результаты, упорядоченные по итоговым потерям (затем по restart_id)
        """
        threads = resolve_threads(config.threads)
        # Вложенный пул потоков в SMO не нужен, если параллельны сами рестарты
        inner = config if config.restarts == 1 else config.model_copy(update={"threads": 1})

        def _job(r: int) -> Callable[[], FitResult]:
            return lambda: fit(X, K, kind, inner, solver=solver, seed=config.seed + r, restart_id=r)

        logger.info("running %d restarts (K=%d, %s, %s) on %d threads",
                    config.restarts, K, kind.value, solver.value, threads)
        results = await self.run_jobs([_job(r) for r in range(config.restarts)], threads)
        return sorted(results, key=lambda res: (res.final_loss, res.restart_id))

    def fit_restarts(
        self,
        X: DataMatrix,
        K: int,
        kind: LikelihoodKind,
        config: SolverConfig,
        solver: SolverKind = SolverKind.SMO_AS,
    ) -> List[FitResult]:
        return _run_sync(self.fit_restarts_async(X, K, kind, config, solver))


def _run_sync(coro: Coroutine[Any, Any, T]) -> T:
    try:
        asyncio.get_running_loop()
    except RuntimeError:
        return asyncio.run(coro)
    coro.close()
    raise RuntimeError("synchronous wrapper called from a running event loop; await the async variant")


background_job_service = BackgroundJobService()
