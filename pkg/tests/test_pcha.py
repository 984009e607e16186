import numpy as np
import pytest

from app.core.feasibility import validate_model
from app.core.schemas import (
    ArchetypalModel, DataMatrix, HalfStep, LikelihoodKind, SolverConfig, SolverKind
)
from app.services.driver import initialize
from app.services.likelihood import likelihood_base, loss, reconstruct
from app.services.pcha import initial_step_state, pcha_service, pcha_update_C, pcha_update_S


def _loss(X, base, model, kind):
    return loss(X, reconstruct(base, model), kind)


def test_zero_gradient_leaves_model_unchanged(rng):
    X = DataMatrix(values=rng.standard_normal((3, 4)))
    model = ArchetypalModel(C=np.eye(4), S=np.eye(4))
    state = initial_step_state(SolverConfig())

    C, state_C = pcha_update_C(X, X, model, state, LikelihoodKind.GAUSSIAN)
    S, state_S = pcha_update_S(X, X, model, state, LikelihoodKind.GAUSSIAN)

    assert np.array_equal(C, model.C)
    assert np.array_equal(S, model.S)
    assert state_C == state
    assert state_S == state


def test_accepted_step_strictly_decreases_loss(binary_X):
    kind = LikelihoodKind.BERNOULLI
    config = SolverConfig()
    P = likelihood_base(binary_X, kind, config.smoothing_epsilon)
    model = initialize(binary_X, 3, seed=1, likelihood=kind)
    state = initial_step_state(config)

    C, state = pcha_update_C(binary_X, P, model, state, kind, config)
    updated = ArchetypalModel(C=C, S=model.S, likelihood=kind)

    assert _loss(binary_X, P, updated, kind) < _loss(binary_X, P, model, kind)
    assert validate_model(updated).is_empty


def test_failed_line_search_keeps_iterate_and_shrinks_step():
    # третье наблюдение лежит вне оболочки архетипов {1, 0}; S в вершине оптимальна
    X = DataMatrix(values=[[1.0, 0.0, 2.0]])
    C = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    S = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    model = ArchetypalModel(C=C, S=S)
    config = SolverConfig(pcha_initial_step=1.0, pcha_max_halvings=5)

    S_new, state = pcha_update_S(X, X, model, initial_step_state(config),
                                 LikelihoodKind.GAUSSIAN, config)

    assert np.array_equal(S_new, S)
    assert state.mu_S == pytest.approx(0.5 ** 5)
    assert state.mu_C == 1.0


@pytest.mark.parametrize("kind", [LikelihoodKind.GAUSSIAN, LikelihoodKind.BERNOULLI])
def test_fit_trace_is_monotone_and_model_feasible(kind, continuous_X, binary_X, fast_config):
    X = binary_X if kind == LikelihoodKind.BERNOULLI else continuous_X
    result = pcha_service.fit_pcha(X, 3, kind, fast_config, seed=7)

    assert result.solver == SolverKind.PCHA
    assert result.trace.is_monotone()
    assert result.trace.half_steps[:3] == [HalfStep.INIT, HalfStep.C, HalfStep.S]
    assert result.final_loss < result.trace.losses[0]
    assert validate_model(result.model).is_empty


def test_zero_iterations_return_initial_model(continuous_X):
    config = SolverConfig(max_outer_iterations=0, restarts=1)
    init = initialize(continuous_X, 2, seed=3)
    result = pcha_service.fit_pcha(continuous_X, 2, LikelihoodKind.GAUSSIAN, config, init=init)

    assert len(result.trace.losses) == 1
    assert result.trace.iterations == 0
    assert np.array_equal(result.model.C, init.C)
    assert not result.converged


def test_fit_is_deterministic_for_fixed_seed(binary_X, fast_config):
    a = pcha_service.fit_pcha(binary_X, 2, LikelihoodKind.BERNOULLI, fast_config, seed=11)
    b = pcha_service.fit_pcha(binary_X, 2, LikelihoodKind.BERNOULLI, fast_config, seed=11)
    assert a.trace.losses == b.trace.losses
    assert np.array_equal(a.model.S, b.model.S)
