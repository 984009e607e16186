import math

import numpy as np
import pytest

from app.core.errors import ArchetypeError, DimensionError
from app.core.schemas import LikelihoodKind, NmiNormalization, SolverConfig, SolverKind
from app.services import evaluation
from app.services.evaluation import evaluation_service, nmi, nmi_report
from app.services.synthetic import generate


def _hard(labels, K):
    S = np.zeros((K, len(labels)))
    S[labels, np.arange(len(labels))] = 1.0
    return S


def _soft(rng, K, N):
    S = rng.exponential(size=(K, N))
    return S / S.sum(axis=0)


def test_identical_hard_assignments_give_one(rng):
    S = _hard(rng.integers(0, 4, size=200), 4)
    assert nmi(S, S) == pytest.approx(1.0, abs=1e-12)


def test_permuted_archetypes_give_same_value(rng):
    S_a = _soft(rng, 4, 100)
    S_b = _soft(rng, 4, 100)
    perm = [2, 0, 3, 1]
    assert nmi(S_a, S_b[perm]) == pytest.approx(nmi(S_a, S_b), abs=1e-12)
    assert nmi(S_a, S_a[perm]) == pytest.approx(nmi(S_a, S_a), abs=1e-12)


def test_independent_assignments_are_near_zero():
    rng = np.random.default_rng(0)
    N = 10_000
    S_a = _hard(rng.integers(0, 4, size=N), 4)
    S_b = _hard(rng.integers(0, 4, size=N), 4)
    assert nmi(S_a, S_b) <= 0.01


def test_soft_assignments_stay_in_unit_interval_and_are_symmetric(rng):
    for K_a, K_b in [(2, 3), (4, 4), (5, 2)]:
        S_a, S_b = _soft(rng, K_a, 50), _soft(rng, K_b, 50)
        value = nmi(S_a, S_b)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(nmi(S_b, S_a), abs=1e-12)


def test_single_archetype_on_both_sides_gives_one():
    assert nmi(np.ones((1, 10)), np.ones((1, 10))) == 1.0


def test_mean_normalization_is_not_smaller_than_max(rng):
    S_a = _hard(rng.integers(0, 2, size=300), 2)
    S_b = _hard(rng.integers(0, 5, size=300), 5)
    assert nmi(S_a, S_b, NmiNormalization.MEAN) >= nmi(S_a, S_b, NmiNormalization.MAX)


def test_mismatched_observation_count(rng):
    with pytest.raises(DimensionError):
        nmi(_soft(rng, 3, 10), _soft(rng, 3, 11))


def test_nmi_report(rng):
    S = _soft(rng, 3, 40)
    report = nmi_report([S, S[[1, 2, 0]], _soft(rng, 3, 40)])

    assert report.pairwise.shape == (3, 3)
    assert np.allclose(np.diag(report.pairwise), 1.0)
    assert np.allclose(report.pairwise, report.pairwise.T)
    assert report.pairwise[0, 1] == pytest.approx(nmi(S, S), abs=1e-12)
    offdiag = report.pairwise[~np.eye(3, dtype=bool)]
    assert report.mean_offdiag == pytest.approx(offdiag.mean())
    assert nmi_report([S]).mean_offdiag == 1.0


def test_sweep_rows_cover_range():
    problem = generate(LikelihoodKind.GAUSSIAN, K=3, M=10, N=40, seed=2, noise=0.05)
    config = SolverConfig(max_outer_iterations=40, restarts=2, threads=1)
    rows = evaluation_service.sweep_k(
        problem.X, range(1, 4), LikelihoodKind.GAUSSIAN, SolverKind.SMO_AS, config
    )

    assert [row.K for row in rows] == [1, 2, 3]
    assert all(row.error is None for row in rows)
    assert rows[0].mean_nmi == 1.0
    assert rows[2].best_loss < rows[0].best_loss
    assert all(0.0 <= row.mean_nmi <= 1.0 for row in rows)


def test_sweep_rejects_bad_range(continuous_X, fast_config):
    with pytest.raises(ValueError):
        evaluation_service.sweep_k(continuous_X, [], LikelihoodKind.GAUSSIAN, SolverKind.SMO_AS, fast_config)
    with pytest.raises(ValueError):
        evaluation_service.sweep_k(
            continuous_X, [2, 21], LikelihoodKind.GAUSSIAN, SolverKind.SMO_AS, fast_config
        )


def test_sweep_records_failure_and_continues(continuous_X, fast_config, monkeypatch):
    original = evaluation.background_job_service.fit_restarts

    def flaky(X, K, kind, config, solver):
        if K == 2:
            raise ArchetypeError("boom")
        return original(X, K, kind, config, solver)

    monkeypatch.setattr(evaluation.background_job_service, "fit_restarts", flaky)
    seen = []
    rows = evaluation_service.sweep_k(
        continuous_X, [1, 2, 3], LikelihoodKind.GAUSSIAN, SolverKind.SMO_AS, fast_config,
        on_row=lambda row, results: seen.append((row.K, len(results))),
    )

    assert [row.K for row in rows] == [1, 2, 3]
    assert rows[1].error == "boom"
    assert math.isnan(rows[1].best_loss)
    assert rows[0].error is None and rows[2].error is None
    assert seen == [(1, 1), (2, 0), (3, 1)]
