import platform
import time
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import pydantic
import scipy

from app.core.config import settings
from app.models.base import OutputRepository
from app.models.domain import (
    CouplingMode, GasParams, GasState, JunctionProblem, RunMetadata, Scenario, StarSolution,
    StarState, VerificationReport, WaveFan,
)
from app.models.exception import AppBaseException, ScenarioPhysicsError, SimulationError
from app.services.euler_core import enthalpy_kernel, entropy_kernel
from app.services.junction_coupling import solve_junction, standard_riemann_from_junction
from app.services.logger import get_logger, log_exception
from app.services.network_sim import SimulationResult, build_network, run_scenario
from app.services.riemann_solver import sample_profile, solve_riemann
from app.services.verification import JacobianFn, run_verification

logger = get_logger(__name__)

COMPARED_MODES = (CouplingMode.ENTROPY_MIX, CouplingMode.PRESSURE_EQUAL)


class JunctionReport(NamedTuple):
    problem: JunctionProblem
    solution: StarSolution
    standard_star: Optional[StarState]


class SimulationOutcome(NamedTuple):
    suffix: str
    result: SimulationResult
    paths: List[str]


class SimulationService:
    """
    Servicio de orquestación de los comandos.
    Encadena escenario, solvers y repositorio de salida.
    """

    def __init__(self, output_repository: OutputRepository):
        """
        Inicializa el servicio con un repositorio de salida.

        Args:
            output_repository: Implementación del repositorio de resultados
        """
        self.output_repository = output_repository
        logger.info("SimulationService inicializado correctamente")

    # ==================== Unión ====================

    def _constant_traces(self, scenario: Scenario, command: str):
        violations = [
            f"pipes[{index}] ({setup.spec.label}): {command} requiere un estado constante ({len(setup.initial)} tramos)"
            for index, setup in enumerate(scenario.pipes)
            if len(setup.initial) != 1
        ]
        if violations:
            raise ScenarioPhysicsError(violations)

    def solve_junction(self, scenario: Scenario) -> JunctionReport:
        """
        Resuelve el problema de Riemann generalizado con los estados constantes del escenario.

        Args:
            scenario: Escenario con un único tramo por tubería

        Returns:
            JunctionReport: Problema, solución y, con dos tuberías equivalentes, la región estrella estándar

        Raises:
            ScenarioPhysicsError: Si alguna tubería tiene datos por tramos
            NoConvergenceError, FlowReversalError, DegenerateInflowError, InvalidJunctionError,
            FlowClassificationError: Errores del solver, sin modificar
        """
        try:
            logger.info(f"solve-junction sobre '{scenario.name}' ({len(scenario.pipes)} tuberías, modo {scenario.mode.value})")
            self._constant_traces(scenario, "solve-junction")
            problem = build_network(scenario).junction_problem()
            solution = solve_junction(problem)
            standard_star = None
            first, second = problem.pipes[0], problem.pipes[-1]
            if problem.n_pipes == 2 and first.nu_norm == second.nu_norm and first.params == second.params:
                standard_star = standard_riemann_from_junction(solution, problem)[2]
            logger.info(f"Unión resuelta en {solution.iterations} iteraciones (residuo {solution.residual_norm:.3e})")
            return JunctionReport(problem, solution, standard_star)

        except AppBaseException as e:
            logger.error(f"Error al resolver la unión: {e.message}")
            raise
        except Exception as e:
            log_exception(logger, e, "solve_junction")
            raise AppBaseException(f"Error al resolver la unión: {str(e)}")

    # ==================== Simulación ====================

    def _metadata(self, scenario: Scenario, config: dict, result: SimulationResult,
                  error: Optional[str] = None) -> RunMetadata:
        return RunMetadata(
            app=settings.APP_NAME,
            version=settings.APP_VERSION,
            config=config,
            mode=scenario.mode.value,
            tolerances={
                "RIEMANN_TOL": settings.RIEMANN_TOL,
                "JUNCTION_TOL": settings.JUNCTION_TOL,
                "DEGENERATE_INFLOW_RTOL": settings.DEGENERATE_INFLOW_RTOL,
                "CONSERVATION_RTOL": settings.CONSERVATION_RTOL,
            },
            versions={
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pydantic": pydantic.VERSION,
            },
            wall_time_s=result.wall_time_s,
            steps=result.steps,
            final_time=result.final_time,
            max_conservation_drift=result.max_conservation_drift(),
            error=error,
        )

    def _flush(self, directory: str, scenario: Scenario, config: dict, result: SimulationResult,
               suffix: str, error: Optional[str] = None) -> List[str]:
        paths = [self.output_repository.save_diagnostics(directory, result.records, suffix)]
        paths.extend(self.output_repository.save_profiles(directory, result.profiles, suffix))
        if scenario.output.probes:
            paths.append(self.output_repository.save_probes(directory, result.probes, suffix))
        paths.append(self.output_repository.save_metadata(directory, self._metadata(scenario, config, result, error), suffix))
        return paths

    def simulate(self, scenario: Scenario, config: dict, out: Optional[str] = None,
                 mode_compare: bool = False) -> List[SimulationOutcome]:
        """
        Ejecuta la simulación y escribe el paquete de salida.

        Args:
            scenario: Escenario validado
            config: Eco de la configuración para los metadatos
            out: Directorio de salida (por defecto el del escenario)
            mode_compare: Si True corre EntropyMix y PressureEqual con sufijos distintos

        Returns:
            List[SimulationOutcome]: Un resultado por corrida

        Raises:
            SimulationError: Si una corrida falla (las salidas parciales ya se escribieron)
            OutputWriteError: Si no se pueden escribir las salidas
        """
        directory = out or scenario.output.directory
        if mode_compare:
            runs = [(scenario.model_copy(update={"mode": mode}), f"_{mode.value}") for mode in COMPARED_MODES]
        else:
            runs = [(scenario, "")]
        outcomes = []
        try:
            for run, suffix in runs:
                logger.info(f"simulate '{run.name}' modo {run.mode.value} -> {directory}")
                run_config = dict(config, junction={"mode": run.mode.value})
                try:
                    result = run_scenario(run)
                except SimulationError as e:
                    logger.error(f"Corrida '{run.name}' ({run.mode.value}) fallida; se escriben resultados parciales")
                    if e.partial is not None:
                        self._flush(directory, run, run_config, e.partial, suffix, e.message)
                    raise
                paths = self._flush(directory, run, run_config, result, suffix)
                outcomes.append(SimulationOutcome(suffix, result, paths))
            return outcomes

        except AppBaseException:
            raise
        except Exception as e:
            log_exception(logger, e, "simulate")
            raise AppBaseException(f"Error al simular: {str(e)}")

    # ==================== Tubo de choque ====================

    def shock_tube(self, scenario: Scenario, out: Optional[str] = None) -> Tuple[WaveFan, str]:
        """
        Solución exacta del problema estándar equivalente a un escenario de dos tuberías.

        La primera tubería es el semieje x > 0 y la segunda el semieje x < 0 reflejado.
        El perfil exacto en t = end_time se muestrea sobre la malla unida y se guarda
        en shock_tube.csv.

        Raises:
            ScenarioPhysicsError: Si el escenario no tiene dos tuberías con el mismo gas y datos constantes
        """
        try:
            self._constant_traces(scenario, "shock-tube")
            if len(scenario.pipes) != 2:
                raise ScenarioPhysicsError([f"pipes: shock-tube requiere exactamente dos tuberías (N={len(scenario.pipes)})"])
            right_setup, left_setup = scenario.pipes
            params: GasParams = right_setup.spec.params
            if left_setup.spec.params != params:
                raise ScenarioPhysicsError(["pipes: shock-tube requiere el mismo gas en ambas tuberías"])

            left = left_setup.initial[0].state.mirrored()
            right: GasState = right_setup.initial[0].state
            fan = solve_riemann(left, right, params)
            logger.info(
                f"shock-tube '{scenario.name}': p*={fan.star.p_star:.12g}, u*={fan.star.u_star:.12g} "
                f"({fan.waves[0].kind.value}, {fan.waves[2].kind.value})"
            )

            x_left = -(np.arange(left_setup.cells)[::-1] + 0.5) * left_setup.dx
            x_right = (np.arange(right_setup.cells) + 0.5) * right_setup.dx
            x = np.concatenate([x_left, x_right])
            rho, u, p = sample_profile(fan, x, scenario.end_time)
            table = np.column_stack([
                x, rho, u, p,
                entropy_kernel(rho, p, params.gamma, params.c_v),
                enthalpy_kernel(rho, u, p, params.gamma),
            ])
            path = self.output_repository.save_shock_tube_profile(out or scenario.output.directory, table)
            return fan, path

        except AppBaseException as e:
            logger.error(f"Error en shock-tube: {e.message}")
            raise
        except Exception as e:
            log_exception(logger, e, "shock_tube")
            raise AppBaseException(f"Error en shock-tube: {str(e)}")

    # ==================== Verificación ====================

    def verify(self, seed: Optional[int] = None, trials: Optional[int] = None,
               jacobian: Optional[JacobianFn] = None) -> VerificationReport:
        """Corre las verificaciones aleatorizadas (ver `run_verification`)."""
        start_time = time.perf_counter()
        try:
            report = run_verification(seed, trials, jacobian)
        except AppBaseException:
            raise
        except Exception as e:
            log_exception(logger, e, "verify")
            raise AppBaseException(f"Error en verify: {str(e)}")
        logger.info(f"Verificación: {sum(c.passed for c in report.checks)}/{len(report.checks)} OK en {time.perf_counter() - start_time:.2f}s")
        return report
