from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Configuración de la aplicación.
    Las variables pueden ser sobrescritas mediante variables de entorno.
    """

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Información de la aplicación
    APP_NAME: str = "Euler Junction Simulator"
    APP_VERSION: str = "1.0.0"
    APP_DESCRIPTION: str = "Solver de Riemann en uniones de tuberías y simulador de redes en estrella"

    # Configuración de logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    LOG_FORMAT: str = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

    # Solver de Riemann estándar
    RIEMANN_TOL: float = 1e-12
    RIEMANN_MAX_ITER: int = 100

    # Newton en la unión
    JUNCTION_TOL: float = 1e-12
    JUNCTION_MAX_ITER: int = 50
    JUNCTION_MAX_HALVINGS: int = 40
    DEGENERATE_INFLOW_RTOL: float = 1e-12

    # Auditoría de conservación
    CONSERVATION_RTOL: float = 1e-9

    # Valores por defecto de la simulación
    DEFAULT_PIPE_LENGTH: float = 1.0
    DEFAULT_CELLS: int = 200
    DEFAULT_CFL: float = 0.9

    # Verificación
    VERIFY_SEED: int = 2016
    VERIFY_TRIALS: int = 100
    VERIFY_FD_STEP: float = 1e-6
    VERIFY_MIN_SINGULAR_VALUE: float = 0.05


# Instancia global de configuración
settings = Settings()
