from pathlib import Path
from typing import List, Sequence

import numpy as np

from app.models.base import OutputRepository
from app.models.domain import DIAGNOSTICS_COLUMNS, PROFILE_COLUMNS, DiagnosticsRecord, RunMetadata
from app.models.exception import OutputWriteError
from app.services.logger import get_logger, log_exception

logger = get_logger(__name__)

PROBE_COLUMNS = ("time", "probe", "x", "rho", "u", "p")
SHOCK_TUBE_COLUMNS = ("x", "rho", "u", "p", "s", "h")


class CsvOutputRepository(OutputRepository):
    """Escribe los resultados como CSV (17 cifras significativas) y metadatos JSON."""

    def __init__(self, delimiter: str = ","):
        logger.info("Inicializando CsvOutputRepository")
        self.delimiter = delimiter

    def _prepare(self, directory: str) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _write_table(self, path: Path, columns: Sequence[str], rows) -> str:
        table = np.asarray(rows, dtype=float).reshape(-1, len(columns))
        np.savetxt(path, table, fmt="%.17g", delimiter=self.delimiter, header=self.delimiter.join(columns), comments="")
        logger.debug(f"Escrito {path} ({table.shape[0]} filas)")
        return str(path)

    def save_diagnostics(self, directory: str, records: Sequence[DiagnosticsRecord], suffix: str = "") -> str:
        """Guarda diagnostics{suffix}.csv con el orden de columnas fijo."""
        try:
            path = self._prepare(directory) / f"diagnostics{suffix}.csv"
            return self._write_table(path, DIAGNOSTICS_COLUMNS, [record.csv_row() for record in records])
        except OSError as e:
            log_exception(logger, e, "save_diagnostics")
            raise OutputWriteError(f"No se pudo escribir diagnostics{suffix}.csv: {str(e)}")

    def save_profiles(self, directory: str, snapshots: Sequence, suffix: str = "") -> List[str]:
        """Guarda profile_<tubería>{suffix}.csv con todas las instantáneas de cada tubería."""
        try:
            base = self._prepare(directory)
            by_pipe = {}
            for snapshot in snapshots:
                by_pipe.setdefault(snapshot.pipe, []).append(snapshot.table())
            paths = []
            for label, tables in by_pipe.items():
                paths.append(self._write_table(base / f"profile_{label}{suffix}.csv", PROFILE_COLUMNS, np.vstack(tables)))
            return paths
        except OSError as e:
            log_exception(logger, e, "save_profiles")
            raise OutputWriteError(f"No se pudieron escribir los perfiles: {str(e)}")

    def save_probes(self, directory: str, rows: Sequence[Sequence[float]], suffix: str = "") -> str:
        try:
            path = self._prepare(directory) / f"probes{suffix}.csv"
            return self._write_table(path, PROBE_COLUMNS, rows)
        except OSError as e:
            log_exception(logger, e, "save_probes")
            raise OutputWriteError(f"No se pudo escribir probes{suffix}.csv: {str(e)}")

    def save_metadata(self, directory: str, metadata: RunMetadata, suffix: str = "") -> str:
        try:
            path = self._prepare(directory) / f"metadata{suffix}.json"
            path.write_text(metadata.model_dump_json(indent=2), encoding="utf-8")
            return str(path)
        except OSError as e:
            log_exception(logger, e, "save_metadata")
            raise OutputWriteError(f"No se pudo escribir metadata{suffix}.json: {str(e)}")

    def save_shock_tube_profile(self, directory: str, table: np.ndarray) -> str:
        try:
            path = self._prepare(directory) / "shock_tube.csv"
            return self._write_table(path, SHOCK_TUBE_COLUMNS, table)
        except OSError as e:
            log_exception(logger, e, "save_shock_tube_profile")
            raise OutputWriteError(f"No se pudo escribir shock_tube.csv: {str(e)}")
