"""
Pydantic схемы предметной области архетипного анализа
"""
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.core.errors import DimensionError, ModeError


class DataMode(str, Enum):
    """Тип значений матрицы данных"""
    CONTINUOUS = "continuous"
    BINARY = "binary"


class LikelihoodKind(str, Enum):
    """Правдоподобие модели"""
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


class SolverKind(str, Enum):
    """Схема вывода"""
    SMO_AS = "smo-as"
    PCHA = "pcha"


class HalfStep(str, Enum):
    """Метка строки трассы"""
    INIT = "init"
    S = "S"
    C = "C"


class MatrixFormat(str, Enum):
    """Форматы файлов матриц"""
    DENSE = "dense-delimited"
    SPARSE = "sparse-coordinate"


class NmiNormalization(str, Enum):
    """Нормировка взаимной информации"""
    MAX = "max"
    MEAN = "mean"


def _readonly(values: Any) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


class _ArrayModel(BaseModel):
    """Базовая неизменяемая модель с numpy-полями"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)



class DataMatrix(_ArrayModel):
    """Матрица данных M×N (признаки × наблюдения)"""
    values: np.ndarray
    mode: DataMode = DataMode.CONTINUOUS

    @field_validator("values", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise DimensionError(f"data matrix must be 2-D and non-empty, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            rows, cols = np.nonzero(~np.isfinite(self.values))
            raise ModeError(
                f"non-finite entry at row {rows[0] + 1}, column {cols[0] + 1}",
                row=int(rows[0]), column=int(cols[0]),
            )
        if self.mode == DataMode.BINARY:
            bad = (self.values != 0.0) & (self.values != 1.0)
            if bad.any():
                rows, cols = np.nonzero(bad)
                raise ModeError(
                    f"non-binary value {self.values[rows[0], cols[0]]!r} "
                    f"at row {rows[0] + 1}, column {cols[0] + 1}",
                    row=int(rows[0]), column=int(cols[0]),
                )
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def is_binary(self) -> bool:
        return self.mode == DataMode.BINARY


class SmoothedMatrix(_ArrayModel):
    """Сглаженная бинарная матрица P со значениями в [eps, 1 - eps]"""
    values: np.ndarray
    epsilon: float = Field(ge=0.0, lt=0.5)

    @field_validator("values", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2:
            raise DimensionError("smoothed matrix must be 2-D")
        slack = 1e-12
        if self.values.min() < self.epsilon - slack or self.values.max() > 1.0 - self.epsilon + slack:
            raise ValueError("smoothed entries must lie in [epsilon, 1 - epsilon]")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


class ArchetypalModel(_ArrayModel):
    """
    Пара (C: N×K, S: K×N) столбцово-стохастических матриц.

    Допустимость (неотрицательность, суммы столбцов) проверяет validate_model;
    конструктор проверяет только размеры и K <= N.
    """
    C: np.ndarray
    S: np.ndarray
    likelihood: LikelihoodKind = LikelihoodKind.GAUSSIAN

    @field_validator("C", "S", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @model_validator(mode="after")
    def _check(self):
        if self.C.ndim != 2 or self.S.ndim != 2:
            raise DimensionError("C and S must be 2-D")
        n, k = self.C.shape
        if k < 1:
            raise DimensionError("K must be positive")
        if self.S.shape != (k, n):
            raise DimensionError(f"S has shape {self.S.shape}, expected {(k, n)}")
        if k > n:
            raise DimensionError(f"K={k} exceeds the number of observations N={n}")
        return self

    @property
    def K(self) -> int:
        return self.C.shape[1]

    @property
    def N(self) -> int:
        return self.C.shape[0]


class QuadraticModel(_ArrayModel):
    """Квадратичная модель const - d^T v + 1/2 v^T H v для одного столбца"""
    d: np.ndarray
    H: np.ndarray
    column_index: int = 0

    @field_validator("d", "H", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @model_validator(mode="after")
    def _check(self):
        size = self.d.shape[0]
        if self.d.ndim != 1 or self.H.shape != (size, size):
            raise DimensionError(f"H has shape {self.H.shape}, expected {(size, size)}")
        scale = max(1.0, float(np.abs(self.H).max(initial=0.0)))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-9 * scale:
            raise ValueError("curvature matrix is not symmetric")
        return self

    @property
    def size(self) -> int:
        return self.d.shape[0]

    def value(self, v: np.ndarray) -> float:
        return float(-self.d @ v + 0.5 * v @ self.H @ v)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.H @ v - self.d

    def is_psd(self, tolerance: float = -1e-8) -> bool:
        if self.size == 0:
            return True
        scale = max(1.0, float(np.abs(self.H).max()))
        return bool(np.linalg.eigvalsh(self.H).min() >= tolerance * scale)



class SolverConfig(BaseModel):
    """Параметры решателей; значения по умолчанию берутся из settings"""

    model_config = ConfigDict(frozen=True)

    max_outer_iterations: int = Field(default_factory=lambda: settings.max_outer_iterations, ge=0)
    rel_loss_tolerance: float = Field(default_factory=lambda: settings.rel_loss_tolerance, gt=0)
    smo_sweep_cap: int = Field(default_factory=lambda: settings.smo_sweep_cap, ge=1)
    smo_rel_tolerance: float = Field(default_factory=lambda: settings.smo_rel_tolerance, gt=0)
    active_set_lambda_scale: float = Field(default_factory=lambda: settings.active_set_lambda_scale, gt=0)
    active_set_eps_scale: float = Field(default_factory=lambda: settings.active_set_eps_scale, gt=0)
    active_set_max_changes: Optional[int] = Field(None, ge=1, description="None означает 3N")
    smoothing_epsilon: float = Field(default_factory=lambda: settings.smoothing_epsilon, gt=0, lt=0.5)
    restarts: int = Field(default_factory=lambda: settings.restarts, ge=1)
    seed: int = Field(default_factory=lambda: settings.seed, ge=0, lt=2 ** 64)
    step_damping: bool = Field(default_factory=lambda: settings.step_damping)
    damping_beta: float = Field(default_factory=lambda: settings.damping_beta, gt=0, lt=1)
    damping_trials: int = Field(default_factory=lambda: settings.damping_trials, ge=1)
    pcha_initial_step: float = Field(default_factory=lambda: settings.pcha_initial_step, gt=0)
    pcha_grow: float = Field(default_factory=lambda: settings.pcha_grow, gt=1)
    pcha_shrink: float = Field(default_factory=lambda: settings.pcha_shrink, gt=0, lt=1)
    pcha_max_halvings: int = Field(default_factory=lambda: settings.pcha_max_halvings, ge=1)
    nmi_normalization: NmiNormalization = Field(
        default_factory=lambda: NmiNormalization(settings.nmi_normalization)
    )
    threads: int = Field(default_factory=lambda: settings.threads, ge=0)


class FitTrace(BaseModel):
    """Значения истинной функции потерь после каждого полушага"""
    losses: List[float] = Field(default_factory=list)
    wall_times: List[float] = Field(default_factory=list)
    half_steps: List[HalfStep] = Field(default_factory=list)
    accepted_steps: int = 0
    damped_steps: int = 0

    def record(self, loss: float, half_step: HalfStep, seconds: float) -> None:
        self.losses.append(float(loss))
        self.half_steps.append(half_step)
        self.wall_times.append(float(seconds))

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def iterations(self) -> int:
        return (len(self.losses) - 1) // 2

    def is_monotone(self, rel_slack: float = 0.0) -> bool:
        values = np.asarray(self.losses)
        if values.size < 2:
            return True
        slack = rel_slack * np.abs(values[:-1])
        return bool(np.all(values[1:] <= values[:-1] + slack))


class FitResult(_ArrayModel):
    """Результат одного запуска"""
    model: ArchetypalModel
    trace: FitTrace
    restart_id: int = 0
    seed: int = 0
    converged: bool = False
    solver: SolverKind = SolverKind.SMO_AS

    @model_validator(mode="after")
    def _check(self):
        if not self.trace.losses:
            raise ValueError("trace must not be empty")
        return self

    @property
    def final_loss(self) -> float:
        return self.trace.final_loss



class Violation(BaseModel):
    """Нарушенное ограничение"""
    matrix: str  # "C" или "S"
    column: int
    kind: str  # "negative", "column_sum", "non_finite"
    magnitude: float
    row: Optional[int] = None


class ValidationReport(BaseModel):
    """Отчет о допустимости модели"""
    violations: List[Violation] = Field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.violations



class PairUpdateState(_ArrayModel):
    """Состояние парного SMO-обновления"""
    s: np.ndarray
    pair: Tuple[int, int]
    t: float
    alpha: float = Field(ge=0.0, le=1.0)

    @field_validator("s", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @model_validator(mode="after")
    def _check(self):
        if self.pair[0] == self.pair[1]:
            raise ValueError("pair indices must differ")
        return self


class ActiveSet(_ArrayModel):
    """Активное множество и решение, нулевое вне него"""
    indices: List[int]
    solution: np.ndarray
    lambda_k: float = 0.0
    epsilon_k: float = 0.0
    iterations: int = 0

    @field_validator("solution", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)


class StepSizeState(BaseModel):
    """Шаги PCHA для C и S"""

    model_config = ConfigDict(frozen=True)

    mu_C: float = 1.0
    mu_S: float = 1.0
    grow: float = Field(2.0, gt=1.0)
    shrink: float = Field(0.5, gt=0.0, lt=1.0)

    @field_validator("mu_C", "mu_S")
    @classmethod
    def _clamp(cls, v: float) -> float:
        return float(min(max(v, 1e-12), 1e12))

    def with_mu(self, factor: str, value: float) -> "StepSizeState":
        data = self.model_dump()
        data[f"mu_{factor}"] = value
        return StepSizeState(**data)



class NmiReport(_ArrayModel):
    """Попарные NMI между R рестартами"""
    pairwise: np.ndarray
    mean_offdiag: float = Field(ge=0.0, le=1.0)

    @field_validator("pairwise", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)


class SweepRow(BaseModel):
    """Строка таблицы перебора K"""
    K: int
    best_loss: float
    mean_nmi: float
    seconds: float
    error: Optional[str] = None


class PlantedProblem(_ArrayModel):
    """Синтетическая задача с известными факторами"""
    X: DataMatrix
    C_true: np.ndarray
    S_true: np.ndarray
    archetypes: np.ndarray
    kind: LikelihoodKind
    seed: int

    @field_validator("C_true", "S_true", "archetypes", mode="before")
    @classmethod
    def _to_array(cls, v):
        return _readonly(v)

    @property
    def model(self) -> ArchetypalModel:
        return ArchetypalModel(C=self.C_true, S=self.S_true, likelihood=self.kind)


class RunManifest(BaseModel):
    """Метаданные запуска для воспроизводимости"""
    command: str
    argv: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)
    input_digest: Optional[str] = None
    seeds: List[int] = Field(default_factory=list)
    software: str = settings.app_name
    software_version: str = settings.app_version
    started_at: datetime = Field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None
    wall_seconds: Optional[float] = None
