"""
Сервис попеременной оптимизации SMO-AS

Итерация: (1) SMO для всех столбцов S, (2) active set + нормировка для
столбцов C по очереди. После каждого полушага записывается истинная
функция потерь; при включенном демпфировании полушаг, увеличивший потери,
заменяется точкой на отрезке между старой и новой итерацией.
"""
import logging
import time
from typing import Callable, Optional, Tuple

import numpy as np

from app.core.errors import ActiveSetNonConvergence, DegenerateColumnError
from app.core.feasibility import project_columns_to_simplex
from app.core.schemas import (
    ArchetypalModel, DataMatrix, FitResult, FitTrace, HalfStep, LikelihoodKind,
    SolverConfig, SolverKind,
)
from app.services.active_set import active_set_solve
from app.services.likelihood import (
    c_quadratic, likelihood_base, loss, reconstruct, s_quadratics
)
from app.services.smo import column_objectives, smo_solve_columns

logger = logging.getLogger(__name__)

_TINY = 1e-300


def initialize(X: DataMatrix, K: int, seed: int,
               likelihood: LikelihoodKind = LikelihoodKind.GAUSSIAN) -> ArchetypalModel:
    """
    Случайная допустимая начальная модель, детерминированная по seed.

    Столбцы C: разреженные выпуклые комбинации (носитель min(5, N)),
    столбцы S: равномерные на симплексе (нормированные экспоненциальные).
    """
    N = X.shape[1]
    if not 1 <= K <= N:
        raise ValueError(f"K must lie in [1, N={N}], got {K}")
    rng = np.random.default_rng(seed)

    support = min(5, N)
    C = np.zeros((N, K))
    for k in range(K):
        rows = rng.choice(N, size=support, replace=False)
        C[rows, k] = rng.exponential(size=support)
    S = rng.exponential(size=(K, N))

    return ArchetypalModel(C=C / C.sum(axis=0), S=S / S.sum(axis=0), likelihood=likelihood)


def relative_change(previous: float, current: float) -> float:
    return abs(previous - current) / max(abs(previous), _TINY)


class FitDriverService:
    """Сервис обучения модели схемой SMO-AS"""

    def fit_smo_as(
        self,
        X: DataMatrix,
        K: int,
        kind: LikelihoodKind,
        config: SolverConfig,
        seed: Optional[int] = None,
        restart_id: int = 0,
        init: Optional[ArchetypalModel] = None,
    ) -> FitResult:
        """Обучает модель попеременными полушагами S и C"""
        seed = config.seed if seed is None else seed
        base = likelihood_base(X, kind, config.smoothing_epsilon)
        model = init if init is not None else initialize(X, K, seed, kind)

        started = time.perf_counter()
        trace = FitTrace()
        R = reconstruct(base, model)
        current = loss(X, R, kind)
        trace.record(current, HalfStep.INIT, 0.0)
        logger.info("SMO-AS fit: K=%d, %s, seed=%d, initial loss %.6g", model.K, kind.value, seed, current)

        converged = False
        for iteration in range(1, config.max_outer_iterations + 1):
            previous = current

            model, R, current = self._s_half_step(X, base, model, R, current, kind, config, trace)
            trace.record(current, HalfStep.S, time.perf_counter() - started)

            model, R, current = self._c_half_step(X, base, model, R, current, kind, config, trace)
            trace.record(current, HalfStep.C, time.perf_counter() - started)

            logger.debug("iteration %d: loss %.10g", iteration, current)
            if relative_change(previous, current) < config.rel_loss_tolerance:
                converged = True
                break

        logger.info(
            "SMO-AS fit finished: loss %.6g after %d iterations (converged=%s)",
            current, trace.iterations, converged,
        )
        return FitResult(
            model=model, trace=trace, restart_id=restart_id, seed=seed,
            converged=converged, solver=SolverKind.SMO_AS,
        )

    def _s_half_step(self, X, base, model, R, current, kind, config, trace):
        H, d = s_quadratics(X, base, model, kind, R=R)
        S_new = smo_solve_columns(H, d, model.S, config)
        predicted = float(np.sum(column_objectives(H, d, model.S) - column_objectives(H, d, S_new)))

        def _evaluate(S: np.ndarray) -> Tuple[ArchetypalModel, np.ndarray, float]:
            candidate = ArchetypalModel(C=model.C, S=S, likelihood=kind)
            R_new = reconstruct(base, candidate)
            return candidate, R_new, loss(X, R_new, kind)

        result = self._damped(model.S, S_new, (model, R, current), _evaluate, config, trace)
        realized = current - result[2]
        if realized > 0 and predicted > 0:
            logger.debug("S half-step: predicted decrease %.4g, realized %.4g", predicted, realized)
        return result

    def _c_half_step(self, X, base, model, R, current, kind, config, trace):
        B = base
        C = np.array(model.C, copy=True)
        S = model.S
        R_work = np.array(R, copy=True)

        for k in range(model.K):
            snapshot = ArchetypalModel(C=C, S=S, likelihood=kind)
            q = c_quadratic(X, B, snapshot, k, kind, R=R_work)
            try:
                c = active_set_solve(q, C[:, k], config)
            except ActiveSetNonConvergence as exc:
                logger.warning("C column %d: %s; using best iterate", k, exc)
                c = exc.best
            try:
                c = project_columns_to_simplex(c[:, None])[:, 0]
            except DegenerateColumnError:
                logger.warning("C column %d: active set returned an empty column; kept previous", k)
                continue
            R_work += np.outer(B @ (c - C[:, k]), S[k])
            C[:, k] = c

        def _evaluate(C_new: np.ndarray) -> Tuple[ArchetypalModel, np.ndarray, float]:
            candidate = ArchetypalModel(C=C_new, S=S, likelihood=kind)
            R_new = reconstruct(B, candidate)
            return candidate, R_new, loss(X, R_new, kind)

        return self._damped(model.C, C, (model, R, current), _evaluate, config, trace)

    def _damped(
        self,
        old: np.ndarray,
        new: np.ndarray,
        current_state: Tuple[ArchetypalModel, np.ndarray, float],
        evaluate: Callable[[np.ndarray], Tuple[ArchetypalModel, np.ndarray, float]],
        config: SolverConfig,
        trace: FitTrace,
    ) -> Tuple[ArchetypalModel, np.ndarray, float]:
        """
        Возвращает новую точку или точку отрезка old -> new, не увеличивающую потери.

        Шаг уменьшается в damping_beta раз, пока потери не перестанут расти;
        берется первая такая точка, а не лучшая на отрезке. Если ни одна из
        damping_trials точек не подошла, полушаг отклоняется.
        """
        current = current_state[2]
        proposal = evaluate(new)
        if not config.step_damping or proposal[2] <= current:
            trace.accepted_steps += 1
            return proposal

        trace.damped_steps += 1
        step = 1.0
        for _ in range(config.damping_trials):
            step *= config.damping_beta
            candidate = evaluate(old + step * (new - old))
            if candidate[2] <= current:
                return candidate

        logger.warning("damping exhausted after %d trials; half-step rejected", config.damping_trials)
        return current_state


fit_driver_service = FitDriverService()
