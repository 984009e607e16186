"""
Синтетические задачи с известными архетипами
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit

from app.core.feasibility import renormalize_or_reset
from app.core.schemas import DataMatrix, DataMode, LikelihoodKind, MatrixFormat, PlantedProblem
from app.services.matrix_io import save_matrix
from app.utils.jsonio import save_json

logger = logging.getLogger(__name__)

DIRICHLET_CONCENTRATION = 0.1

DEFAULT_K = 4
DEFAULT_M = 100
DEFAULT_N = 300
DEFAULT_SHARPNESS = 3.0
DEFAULT_VERTEX_MIXING = 0.01


def planted_assignments(K: int, N: int, rng: np.random.Generator,
                        vertex_mixing: float = DEFAULT_VERTEX_MIXING) -> np.ndarray:
    """
    Столбцы S около вершин симплекса.

    Столбец j: (1 - r_j) e_c + r_j u_j, где c равномерно из K,
    r_j ~ U(0, vertex_mixing), u_j ~ Dirichlet(0.1).
    """
    dominant = rng.integers(K, size=N)
    hard = np.zeros((K, N))
    hard[dominant, np.arange(N)] = 1.0
    sparse = renormalize_or_reset(rng.gamma(DIRICHLET_CONCENTRATION, size=(K, N)))
    mixing = rng.uniform(0.0, vertex_mixing, size=N)
    return (1.0 - mixing) * hard + mixing * sparse


def generate(
    kind: LikelihoodKind,
    K: int = DEFAULT_K,
    M: int = DEFAULT_M,
    N: int = DEFAULT_N,
    seed: int = 0,
    noise: float = 0.0,
    archetype_sharpness: float = DEFAULT_SHARPNESS,
    vertex_mixing: float = DEFAULT_VERTEX_MIXING,
) -> PlantedProblem:
    """
    Данные из заданной модели с K чистыми наблюдениями.

    gaussian:  X = A S + noise * N(0, 1)
    bernoulli: X_ij ~ Bernoulli((A S)_ij), затем каждый бит инвертируется
               с вероятностью noise (не больше 0.5)
    Столбцы S из planted_assignments; K случайных столбцов заменены вершинами,
    так что C состоит из one-hot столбцов и архетипы лежат в оболочке данных.
    """
    kind = LikelihoodKind(kind)
    if K < 1 or K > min(M, N):
        raise ValueError(f"K must lie in [1, min(M, N)={min(M, N)}], got {K}")
    if noise < 0:
        raise ValueError(f"noise must be non-negative, got {noise}")
    if archetype_sharpness <= 0:
        raise ValueError(f"archetype_sharpness must be positive, got {archetype_sharpness}")
    if not 0.0 <= vertex_mixing <= 1.0:
        raise ValueError(f"vertex_mixing must lie in [0, 1], got {vertex_mixing}")

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((M, K))
    archetypes = z if kind == LikelihoodKind.GAUSSIAN else expit(archetype_sharpness * z)

    S_true = planted_assignments(K, N, rng, vertex_mixing)
    pure = rng.choice(N, size=K, replace=False)
    S_true[:, pure] = np.eye(K)
    C_true = np.zeros((N, K))
    C_true[pure, np.arange(K)] = 1.0

    mean = archetypes @ S_true
    if kind == LikelihoodKind.GAUSSIAN:
        values = mean + noise * rng.standard_normal((M, N)) if noise > 0 else mean
        X = DataMatrix(values=values, mode=DataMode.CONTINUOUS)
    else:
        bits = rng.random((M, N)) < mean
        flip_probability = min(noise, 0.5)
        if flip_probability > 0:
            bits ^= rng.random((M, N)) < flip_probability
        X = DataMatrix(values=bits.astype(np.float64), mode=DataMode.BINARY)

    logger.info("planted %s problem: K=%d, M=%d, N=%d, seed=%d, noise=%g",
                kind.value, K, M, N, seed, noise)
    return PlantedProblem(
        X=X, C_true=C_true, S_true=S_true, archetypes=archetypes, kind=kind, seed=seed
    )


def write_problem(
    problem: PlantedProblem,
    directory: Union[str, Path],
    fmt: MatrixFormat = MatrixFormat.DENSE,
) -> Path:
    """X в выбранном формате и истинные факторы; возвращает путь к файлу X"""
    directory = Path(directory)
    fmt = MatrixFormat(fmt)
    x_path = directory / ("X.csv" if fmt == MatrixFormat.DENSE else "X.mtx")
    save_matrix(x_path, problem.X.values, fmt)
    save_matrix(directory / "C_true.csv", problem.C_true)
    save_matrix(directory / "S_true.csv", problem.S_true)
    save_matrix(directory / "archetypes.csv", problem.archetypes)
    save_json(directory / "problem.json", {
        "kind": problem.kind,
        "K": problem.S_true.shape[0],
        "M": problem.X.shape[0],
        "N": problem.X.shape[1],
        "seed": problem.seed,
        "format": fmt,
        "data_file": x_path.name,
    })
    return x_path
