"""
Воспроизведение свойств на синтетических задачах.

Длинные прогоны помечены slow и запускаются с --runslow.
"""
import numpy as np
import pytest

from app.core.schemas import LikelihoodKind, SolverConfig, SolverKind
from app.services.background import background_job_service
from app.services.benchmark import bench_smo
from app.services.driver import fit_driver_service
from app.services.evaluation import evaluation_service, nmi_report
from app.services.pcha import pcha_service
from app.services.synthetic import generate


def _best(X, K, kind, config, solver):
    return background_job_service.fit_restarts(X, K, kind, config, solver)[0]


def test_single_archetype_losses_agree_across_solvers(continuous_X):
    config = SolverConfig(max_outer_iterations=3000, rel_loss_tolerance=1e-13, restarts=1, threads=1)
    smo = fit_driver_service.fit_smo_as(continuous_X, 1, LikelihoodKind.GAUSSIAN, config, seed=0)
    pcha = pcha_service.fit_pcha(continuous_X, 1, LikelihoodKind.GAUSSIAN, config, seed=0)

    assert pcha.final_loss == pytest.approx(smo.final_loss, rel=1e-6)


def test_two_archetype_pair_updates_resolve_immediately():
    table = bench_smo([2], trials=20, seed=1)
    assert table["within_K2"].iloc[0] == 1.0
    assert table["unresolved"].iloc[0] == 0


@pytest.mark.slow
def test_pair_updates_resolve_within_budget():
    table = bench_smo([5, 10], trials=20, seed=2, budget_factor=50)
    assert table["unresolved"].tolist() == [0, 0]


@pytest.mark.slow
def test_pair_update_counts_across_archetype_counts():
    # лексикографические проходы: K^2 достижимо только для малых K
    table = bench_smo([2, 5, 10, 25], trials=100).set_index("K")

    assert table.loc[2, "within_K2"] == 1.0
    assert table.loc[5, "within_2K2"] >= 0.9
    assert table.loc[10, "within_2K2"] >= 0.3
    assert table.loc[25, "within_2K2"] > 0.0
    assert (table["within_K2"] <= table["within_2K2"]).all()


@pytest.mark.slow
def test_planted_gaussian_recovery_at_desk_scale():
    problem = generate(LikelihoodKind.GAUSSIAN, K=4, M=100, N=300, seed=0)
    config = SolverConfig(restarts=10, threads=0)
    best = _best(problem.X, 4, LikelihoodKind.GAUSSIAN, config, SolverKind.SMO_AS)
    assert best.final_loss <= 1e-6 * float(np.sum(problem.X.values ** 2))


@pytest.mark.slow
def test_bernoulli_solvers_reach_similar_losses():
    problem = generate(LikelihoodKind.BERNOULLI, K=3, M=30, N=60, seed=4)
    config = SolverConfig(restarts=5, threads=0)
    smo = _best(problem.X, 3, LikelihoodKind.BERNOULLI, config, SolverKind.SMO_AS)
    pcha = _best(problem.X, 3, LikelihoodKind.BERNOULLI, config, SolverKind.PCHA)
    assert abs(pcha.final_loss - smo.final_loss) <= 0.05 * smo.final_loss


def _check_sweep(problem, k_true, k_max):
    config = SolverConfig(restarts=10, threads=0)
    rows = evaluation_service.sweep_k(
        problem.X, range(2, k_max + 1), LikelihoodKind.BERNOULLI, SolverKind.SMO_AS, config
    )
    losses = {row.K: row.best_loss for row in rows}
    assert all(row.error is None for row in rows)

    for K in range(2, k_true):
        assert (losses[K] - losses[K + 1]) / losses[K] >= 0.10
    for K in range(k_true, k_max):
        assert (losses[K] - losses[K + 1]) / losses[K] < 0.02
    assert next(row for row in rows if row.K == k_true).mean_nmi >= 0.9


@pytest.mark.slow
def test_bernoulli_sweep_elbow_at_desk_scale():
    problem = generate(LikelihoodKind.BERNOULLI, K=4, M=100, N=300, seed=0, archetype_sharpness=5.0)
    _check_sweep(problem, 4, 8)


@pytest.mark.slow
def test_bernoulli_sweep_elbow_at_full_scale():
    problem = generate(LikelihoodKind.BERNOULLI, K=8, M=800, N=1000, seed=0, archetype_sharpness=5.0)
    _check_sweep(problem, 8, 10)


@pytest.mark.slow
def test_restarts_are_stable_on_separated_data():
    problem = generate(LikelihoodKind.BERNOULLI, K=4, M=100, N=300, seed=1, archetype_sharpness=5.0)
    config = SolverConfig(restarts=10, threads=0)
    results = background_job_service.fit_restarts(
        problem.X, 4, LikelihoodKind.BERNOULLI, config, SolverKind.SMO_AS
    )
    assert nmi_report([r.model.S for r in results]).mean_offdiag >= 0.9
