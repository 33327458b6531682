from abc import ABC, abstractmethod
from typing import List, Sequence

import numpy as np

from app.models.domain import DiagnosticsRecord, RunMetadata


class OutputRepository(ABC):
    """Interfaz abstracta para la persistencia de resultados de simulación."""

    @abstractmethod
    def save_diagnostics(self, directory: str, records: Sequence[DiagnosticsRecord], suffix: str = "") -> str:
        """Guarda la serie de diagnósticos y retorna la ruta escrita"""
        pass

    @abstractmethod
    def save_profiles(self, directory: str, snapshots: Sequence, suffix: str = "") -> List[str]:
        """Guarda un perfil por tubería (instantáneas con `.pipe` y `.table()`)"""
        pass

    @abstractmethod
    def save_probes(self, directory: str, rows: Sequence[Sequence[float]], suffix: str = "") -> str:
        """Guarda las lecturas de las sondas"""
        pass

    @abstractmethod
    def save_metadata(self, directory: str, metadata: RunMetadata, suffix: str = "") -> str:
        """Guarda los metadatos de la corrida"""
        pass

    @abstractmethod
    def save_shock_tube_profile(self, directory: str, table: np.ndarray) -> str:
        """Guarda el perfil exacto del tubo de choque"""
        pass
