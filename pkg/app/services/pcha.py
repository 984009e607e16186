"""
PCHA и B-PCHA: проекционный градиент с перенормировкой на симплекс

Шаг для C (для S симметрично):
    C <- max(C~ - mu (G - 1 (sum_j G_jk c~_jk)), 0),  затем нормировка столбцов,
где C~ нормированная C. mu подбирается мультипликативным line search
по истинной функции потерь (успех: mu * grow, неудача: mu * shrink).
"""
import logging
import time
from typing import Optional, Tuple

import numpy as np

from app.core.feasibility import renormalize_or_reset
from app.core.schemas import (
    ArchetypalModel, DataMatrix, FitResult, FitTrace, HalfStep, LikelihoodKind,
    SolverConfig, SolverKind, StepSizeState,
)
from app.services.driver import initialize, relative_change
from app.services.likelihood import (
    MatrixLike, factor_gradients, likelihood_base, loss, reconstruct
)

logger = logging.getLogger(__name__)


def initial_step_state(config: SolverConfig) -> StepSizeState:
    return StepSizeState(
        mu_C=config.pcha_initial_step,
        mu_S=config.pcha_initial_step,
        grow=config.pcha_grow,
        shrink=config.pcha_shrink,
    )


def _line_search(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    state: StepSizeState,
    factor: str,
    kind: LikelihoodKind,
    max_halvings: int,
) -> Tuple[ArchetypalModel, StepSizeState, float]:
    """
    Один шаг проекционного градиента по factor ("C" или "S").

    Кандидат принимается только при строгом уменьшении потерь исходной
    модели; иначе модель возвращается без изменений.
    """
    current = loss(X, reconstruct(base, model), kind)
    tilde = ArchetypalModel(
        C=renormalize_or_reset(model.C), S=renormalize_or_reset(model.S), likelihood=kind
    )

    G_C, G_S = factor_gradients(X, base, tilde, kind)
    point = tilde.C if factor == "C" else tilde.S
    G = G_C if factor == "C" else G_S
    centered = G - np.sum(G * point, axis=0, keepdims=True)
    if not np.any(centered):
        return model, state, current

    mu = state.mu_C if factor == "C" else state.mu_S
    for _ in range(max_halvings):
        step = renormalize_or_reset(np.maximum(point - mu * centered, 0.0))
        if factor == "C":
            candidate = ArchetypalModel(C=step, S=tilde.S, likelihood=kind)
        else:
            candidate = ArchetypalModel(C=tilde.C, S=step, likelihood=kind)
        candidate_loss = loss(X, reconstruct(base, candidate), kind)
        if candidate_loss < current:
            return candidate, state.with_mu(factor, mu * state.grow), candidate_loss
        mu *= state.shrink

    return model, state.with_mu(factor, mu), current


def pcha_update_C(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    state: StepSizeState,
    kind: LikelihoodKind = LikelihoodKind.BERNOULLI,
    config: Optional[SolverConfig] = None,
) -> Tuple[np.ndarray, StepSizeState]:
    """Шаг по C; base = P для bernoulli, X для gaussian"""
    config = config or SolverConfig()
    updated, state, _ = _line_search(X, base, model, state, "C", kind, config.pcha_max_halvings)
    return np.array(updated.C), state


def pcha_update_S(
    X: MatrixLike,
    base: MatrixLike,
    model: ArchetypalModel,
    state: StepSizeState,
    kind: LikelihoodKind = LikelihoodKind.BERNOULLI,
    config: Optional[SolverConfig] = None,
) -> Tuple[np.ndarray, StepSizeState]:
    """Шаг по S"""
    config = config or SolverConfig()
    updated, state, _ = _line_search(X, base, model, state, "S", kind, config.pcha_max_halvings)
    return np.array(updated.S), state


class PchaService:
    """Сервис обучения (B-)PCHA"""

    def fit_pcha(
        self,
        X: DataMatrix,
        K: int,
        kind: LikelihoodKind,
        config: SolverConfig,
        seed: Optional[int] = None,
        restart_id: int = 0,
        init: Optional[ArchetypalModel] = None,
    ) -> FitResult:
        """Чередует шаги по C и S до относительного изменения потерь < tol"""
        seed = config.seed if seed is None else seed
        base = likelihood_base(X, kind, config.smoothing_epsilon)
        model = init if init is not None else initialize(X, K, seed, kind)
        state = initial_step_state(config)

        started = time.perf_counter()
        trace = FitTrace()
        current = loss(X, reconstruct(base, model), kind)
        trace.record(current, HalfStep.INIT, 0.0)
        logger.info("PCHA fit: K=%d, %s, seed=%d, initial loss %.6g", model.K, kind.value, seed, current)

        converged = False
        idle = 0
        for iteration in range(1, config.max_outer_iterations + 1):
            previous = current
            accepted = False
            for factor, label in (("C", HalfStep.C), ("S", HalfStep.S)):
                before = current
                model, state, current = _line_search(
                    X, base, model, state, factor, kind, config.pcha_max_halvings
                )
                if current < before:
                    trace.accepted_steps += 1
                    accepted = True
                trace.record(current, label, time.perf_counter() - started)

            logger.debug("iteration %d: loss %.10g (mu_C=%.3g, mu_S=%.3g)",
                         iteration, current, state.mu_C, state.mu_S)
            # итерация без принятых шагов только уменьшает mu; сходимость после двух подряд
            idle = 0 if accepted else idle + 1
            small = relative_change(previous, current) < config.rel_loss_tolerance
            if small and (accepted or idle >= 2):
                converged = True
                break

        logger.info(
            "PCHA fit finished: loss %.6g after %d iterations (converged=%s)",
            current, trace.iterations, converged,
        )
        return FitResult(
            model=model, trace=trace, restart_id=restart_id, seed=seed,
            converged=converged, solver=SolverKind.PCHA,
        )


pcha_service = PchaService()
