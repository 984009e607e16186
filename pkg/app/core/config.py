"""
Конфигурация решателя архетипного анализа
"""
import os
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Настройки приложения и значения по умолчанию для решателей"""

    app_name: str = "Binary Archetypal Analysis"
    app_version: str = "1.0.0"
    log_level: str = "INFO"

    # Внешний цикл
    max_outer_iterations: int = 500
    rel_loss_tolerance: float = 1e-8

    # SMO для S
    smo_sweep_cap: int = 10  # в единицах K^2 парных обновлений
    smo_rel_tolerance: float = 1e-10

    # Active set для C
    active_set_lambda_scale: float = 1e9
    active_set_eps_scale: float = 1e-15

    # Бернулли
    smoothing_epsilon: float = 1e-3

    # Рестарты
    restarts: int = 10
    seed: int = 0

    # Демпфирование полушагов
    step_damping: bool = True
    damping_beta: float = 0.5
    damping_trials: int = 20

    # PCHA line search
    pcha_initial_step: float = 1.0
    pcha_grow: float = 2.0
    pcha_shrink: float = 0.5
    pcha_max_halvings: int = 20

    nmi_normalization: Literal["max", "mean"] = "max"

    # CLI и файлы
    delimiter: str = ","
    float_format: str = "%.17g"
    threads: int = 0

    model_config = SettingsConfigDict(
        env_prefix="AA_",
        env_file=".env",
        env_file_encoding="utf-8"
    )


settings = Settings()


def resolve_threads(threads: int) -> int:
    """0 означает число процессоров"""
    if threads and threads > 0:
        return threads
    return os.cpu_count() or 1
