import argparse
import json
import sys
from typing import List, Optional

from app.api.commands import cmd_shock_tube, cmd_simulate, cmd_solve_junction, cmd_verify, set_simulation_service
from app.core.config import settings
from app.models.exception import (
    AppBaseException,
    DegenerateInflowError,
    DomainError,
    FlowClassificationError,
    FlowReversalError,
    InvalidJunctionError,
    NoConvergenceError,
    OutputWriteError,
    ScenarioError,
    SimulationError,
)
from app.repository.csv_output import CsvOutputRepository
from app.services.logger import app_logger, log_exception, setup_logger
from app.services.simulationService import SimulationService

# Logger configurado desde el módulo centralizado
logger = app_logger


# ==================== Exit Codes ====================

EXIT_OK = 0
EXIT_FAILURE = 1

# El orden importa: se usa la primera clase que coincide
EXIT_CODES = (
    (NoConvergenceError, 2),
    (FlowReversalError, 3),
    (DegenerateInflowError, 4),
    (InvalidJunctionError, 5),
    (FlowClassificationError, 6),
    (ScenarioError, 7),
    (DomainError, 8),
    (OutputWriteError, 9),
)


def exit_code_for(exc: BaseException) -> int:
    """Código de salida estable de una excepción (una SimulationError usa el de su causa)."""
    if isinstance(exc, SimulationError):
        exc = exc.cause
    for exception_class, code in EXIT_CODES:
        if isinstance(exc, exception_class):
            return code
    return EXIT_FAILURE


def report_error(exc: BaseException, code: int):
    """Escribe una línea JSON con la clase del error en stderr."""
    cause = exc.cause if isinstance(exc, SimulationError) else exc
    payload = {
        "error": type(cause).__name__,
        "exit_code": code,
        "detail": getattr(exc, "message", str(exc)),
    }
    if isinstance(exc, SimulationError):
        payload["step"] = exc.step
        payload["time"] = exc.time
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")
    sys.stderr.flush()


# ==================== Argumentos ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junction", description=settings.APP_DESCRIPTION)
    parser.add_argument("--log-level", default=None, help="Nivel de logging (DEBUG, INFO, WARNING, ERROR)")
    subcommands = parser.add_subparsers(dest="command", required=True)

    solve = subcommands.add_parser("solve-junction", help="Resuelve el problema de Riemann generalizado")
    solve.add_argument("config", help="Archivo de escenario (JSON)")

    simulate = subcommands.add_parser("simulate", help="Simula la red y escribe los resultados")
    simulate.add_argument("config", help="Archivo de escenario (JSON)")
    simulate.add_argument("--mode-compare", action="store_true", help="Corre entropy_mix y pressure_equal")
    simulate.add_argument("--out", default=None, help="Directorio de salida")

    shock = subcommands.add_parser("shock-tube", help="Solución exacta del tubo de choque equivalente")
    shock.add_argument("config", help="Archivo de escenario (JSON) con dos tuberías")
    shock.add_argument("--out", default=None, help="Directorio de salida")

    verify = subcommands.add_parser("verify", help="Verificaciones aleatorizadas con semilla fija")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--trials", type=int, default=None)
    return parser


# ==================== Startup ====================

def startup(log_level: Optional[str] = None):
    """Configura logging e inyecta repositorio y servicio (Dependency Injection manual)."""
    if log_level:
        setup_logger(name="junction", level=log_level)
    logger.info("=" * 60)
    logger.info(f"Iniciando {settings.APP_NAME} v{settings.APP_VERSION}")
    logger.info("=" * 60)
    output_repository = CsvOutputRepository()
    set_simulation_service(SimulationService(output_repository))
    logger.info("Repository: CSV (17 cifras significativas) + metadatos JSON")
    logger.info(f"Tolerancias: Riemann={settings.RIEMANN_TOL:g}, unión={settings.JUNCTION_TOL:g}")
    logger.info("=" * 60)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "solve-junction":
        return cmd_solve_junction(args.config)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, args.mode_compare)
    if args.command == "shock-tube":
        return cmd_shock_tube(args.config, args.out)
    return cmd_verify(args.seed, args.trials)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Punto de entrada de la línea de comandos.

    Returns:
        int: Código de salida (tabla en README.md)
    """
    args = build_parser().parse_args(argv)
    startup(args.log_level)
    try:
        return dispatch(args)
    except AppBaseException as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e.message} (exit {code})")
        report_error(e, code)
        return code
    except Exception as e:
        log_exception(logger, e, args.command)
        report_error(e, EXIT_FAILURE)
        return EXIT_FAILURE
    finally:
        logger.info(f"Comando {args.command} finalizado")


if __name__ == "__main__":
    sys.exit(main())
