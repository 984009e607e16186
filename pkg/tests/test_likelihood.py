import numpy as np
import pytest

from app.core.errors import DimensionError, LikelihoodDomainError, ModeError
from app.core.schemas import ArchetypalModel, DataMatrix, DataMode, LikelihoodKind
from app.services.likelihood import (
    bpcha_gradients, c_quadratic, check_kind, factor_gradients, likelihood_base, loss,
    reconstruct, s_quadratic, s_quadratics, smooth,
)

KINDS = [LikelihoodKind.GAUSSIAN, LikelihoodKind.BERNOULLI]


def _instance(seed, kind, M=10, N=20, K=3):
    rng = np.random.default_rng(seed)
    if kind == LikelihoodKind.BERNOULLI:
        X = DataMatrix(values=(rng.random((M, N)) < 0.4).astype(float), mode=DataMode.BINARY)
    else:
        X = DataMatrix(values=rng.standard_normal((M, N)))
    C = rng.exponential(size=(N, K))
    S = rng.exponential(size=(K, N))
    model = ArchetypalModel(C=C / C.sum(axis=0), S=S / S.sum(axis=0), likelihood=kind)
    return X, likelihood_base(X, kind, 1e-3), model


def _relative(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def _loss_at(X, base, C, S, kind):
    return loss(X, reconstruct(base, ArchetypalModel(C=C, S=S, likelihood=kind)), kind)


def test_smoothing_examples():
    X = DataMatrix(values=[[0.0, 1.0]], mode=DataMode.BINARY)
    assert np.allclose(smooth(X, 1e-3).values, [[1e-3, 0.999]])
    assert np.array_equal(smooth(X, 0.0).values, [[0.0, 1.0]])


def test_smoothing_rejects_non_binary():
    with pytest.raises(ModeError):
        smooth(DataMatrix(values=[[0.0, 0.5]]), 1e-3)


def test_bernoulli_requires_binary_mode(continuous_X):
    with pytest.raises(ModeError):
        check_kind(continuous_X, LikelihoodKind.BERNOULLI)


def test_identity_reconstruction(continuous_X):
    N = continuous_X.shape[1]
    model = ArchetypalModel(C=np.eye(N), S=np.eye(N))
    R = reconstruct(continuous_X, model)
    assert np.allclose(R, continuous_X.values)
    assert loss(continuous_X, R, LikelihoodKind.GAUSSIAN) == pytest.approx(0.0, abs=1e-20)


def test_single_archetype_reconstruction(continuous_X, simplex_columns):
    N = continuous_X.shape[1]
    c = simplex_columns(N, 1)
    R = reconstruct(continuous_X, ArchetypalModel(C=c, S=np.ones((1, N))))
    archetype = continuous_X.values @ c[:, 0]
    assert np.allclose(R, np.repeat(archetype[:, None], N, axis=1))


def test_reconstruction_dimension_mismatch(continuous_X):
    with pytest.raises(DimensionError):
        reconstruct(continuous_X, ArchetypalModel(C=np.eye(3), S=np.eye(3)))


def test_bernoulli_reconstruction_stays_in_smoothed_range():
    X, P, model = _instance(0, LikelihoodKind.BERNOULLI)
    R = reconstruct(P, model)
    assert R.min() >= 1e-3 - 1e-15
    assert R.max() <= 1.0 - 1e-3 + 1e-15


def test_scalar_bernoulli_losses():
    one = np.array([[1.0]])
    zero = np.array([[0.0]])
    assert loss(one, np.array([[0.999]]), LikelihoodKind.BERNOULLI) == pytest.approx(1.0005e-3, rel=1e-4)
    assert loss(zero, np.array([[0.5]]), LikelihoodKind.BERNOULLI) == pytest.approx(np.log(2.0))


def test_bernoulli_loss_domain_error():
    with pytest.raises(LikelihoodDomainError):
        loss(np.array([[1.0, 0.0]]), np.array([[1.0, 0.5]]), LikelihoodKind.BERNOULLI)


def test_orthonormal_archetypes_give_identity_curvature():
    X = DataMatrix(values=np.eye(4))
    C = np.zeros((4, 2))
    C[0, 0] = C[1, 1] = 1.0
    S = np.full((2, 4), 0.5)
    q = s_quadratic(X, X, ArchetypalModel(C=C, S=S), 2, LikelihoodKind.GAUSSIAN)
    assert np.allclose(q.H, 2.0 * np.eye(2))


def test_unused_archetype_has_flat_c_quadratic(continuous_X, simplex_columns):
    N = continuous_X.shape[1]
    S = np.zeros((2, N))
    S[0] = 1.0
    model = ArchetypalModel(C=simplex_columns(N, 2), S=S)
    q = c_quadratic(continuous_X, continuous_X, model, 1, LikelihoodKind.GAUSSIAN)
    assert np.allclose(q.H, 0.0)
    assert np.allclose(q.d, 0.0)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(20))
def test_s_quadratic_matches_finite_differences(kind, seed):
    X, base, model = _instance(seed, kind)
    j = seed % model.N
    q = s_quadratic(X, base, model, j, kind)
    C, S = np.array(model.C), np.array(model.S)

    step = 1e-5
    numeric = np.zeros(model.K)
    for k in range(model.K):
        plus, minus = S.copy(), S.copy()
        plus[k, j] += step
        minus[k, j] -= step
        numeric[k] = (_loss_at(X, base, C, plus, kind) - _loss_at(X, base, C, minus, kind)) / (2 * step)
    assert _relative(q.gradient(S[:, j]), numeric) <= 1e-4

    step = 1e-4
    hessian = np.zeros((model.K, model.K))
    for k in range(model.K):
        plus, minus = S.copy(), S.copy()
        plus[k, j] += step
        minus[k, j] -= step
        g_plus = factor_gradients(X, base, ArchetypalModel(C=C, S=plus, likelihood=kind), kind)[1]
        g_minus = factor_gradients(X, base, ArchetypalModel(C=C, S=minus, likelihood=kind), kind)[1]
        hessian[:, k] = (g_plus[:, j] - g_minus[:, j]) / (2 * step)
    assert _relative(q.H, hessian) <= 1e-3
    assert q.is_psd()


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(20))
def test_c_quadratic_matches_finite_differences(kind, seed):
    X, base, model = _instance(100 + seed, kind)
    k = seed % model.K
    q = c_quadratic(X, base, model, k, kind)
    C, S = np.array(model.C), np.array(model.S)

    step = 1e-5
    numeric = np.zeros(model.N)
    for j in range(model.N):
        plus, minus = C.copy(), C.copy()
        plus[j, k] += step
        minus[j, k] -= step
        numeric[j] = (_loss_at(X, base, plus, S, kind) - _loss_at(X, base, minus, S, kind)) / (2 * step)
    assert _relative(q.gradient(C[:, k]), numeric) <= 1e-4

    step = 1e-4
    hessian = np.zeros((model.N, model.N))
    for j in range(model.N):
        plus, minus = C.copy(), C.copy()
        plus[j, k] += step
        minus[j, k] -= step
        g_plus = factor_gradients(X, base, ArchetypalModel(C=plus, S=S, likelihood=kind), kind)[0]
        g_minus = factor_gradients(X, base, ArchetypalModel(C=minus, S=S, likelihood=kind), kind)[0]
        hessian[:, j] = (g_plus[:, k] - g_minus[:, k]) / (2 * step)
    assert _relative(q.H, hessian) <= 1e-3


@pytest.mark.parametrize("kind", KINDS)
def test_batched_s_quadratics_match_single_columns(kind):
    X, base, model = _instance(7, kind)
    H, d = s_quadratics(X, base, model, kind)
    for j in range(model.N):
        q = s_quadratic(X, base, model, j, kind)
        H_j = H if H.ndim == 2 else H[j]
        assert np.allclose(H_j, q.H, rtol=1e-10, atol=1e-10)
        assert np.allclose(d[:, j], q.d, rtol=1e-10, atol=1e-10)


def test_gaussian_curvature_is_shared_and_bernoulli_is_not():
    X, base, model = _instance(3, LikelihoodKind.GAUSSIAN)
    assert s_quadratics(X, base, model, LikelihoodKind.GAUSSIAN)[0].ndim == 2
    X, base, model = _instance(3, LikelihoodKind.BERNOULLI)
    H, _ = s_quadratics(X, base, model, LikelihoodKind.BERNOULLI)
    assert H.ndim == 3
    assert not np.allclose(H[0], H[1])


@pytest.mark.parametrize("seed", range(20))
def test_bpcha_gradients_match_finite_differences(seed):
    X, P, model = _instance(200 + seed, LikelihoodKind.BERNOULLI, M=8, N=15, K=3)
    G_C, G_S = bpcha_gradients(X, P, model)
    C, S = np.array(model.C), np.array(model.S)
    kind = LikelihoodKind.BERNOULLI
    step = 1e-6

    numeric_C = np.zeros_like(C)
    for j in range(C.shape[0]):
        for k in range(C.shape[1]):
            plus, minus = C.copy(), C.copy()
            plus[j, k] += step
            minus[j, k] -= step
            numeric_C[j, k] = (_loss_at(X, P, plus, S, kind) - _loss_at(X, P, minus, S, kind)) / (2 * step)

    numeric_S = np.zeros_like(S)
    for k in range(S.shape[0]):
        for j in range(S.shape[1]):
            plus, minus = S.copy(), S.copy()
            plus[k, j] += step
            minus[k, j] -= step
            numeric_S[k, j] = (_loss_at(X, P, C, plus, kind) - _loss_at(X, P, C, minus, kind)) / (2 * step)

    assert _relative(G_C, numeric_C) <= 1e-5
    assert _relative(G_S, numeric_S) <= 1e-5


def test_bpcha_gradient_scales_with_smoothed_matrix():
    X, P, model = _instance(5, LikelihoodKind.BERNOULLI)
    R = reconstruct(P, model)
    grad_R = -X.values / R + (1.0 - X.values) / (1.0 - R)
    G_C, _ = bpcha_gradients(X, P, model)
    assert np.allclose(G_C, P.T @ grad_R @ model.S.T)
