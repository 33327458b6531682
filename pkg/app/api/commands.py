"""
Manejadores de los subcomandos: cargan el escenario, delegan en el servicio
y escriben el resultado como JSON en stdout.
"""
import sys
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict

from app.api.schemas import load_scenario, scenario_to_config
from app.models.domain import CheckResult, ConservationDiagnostics, FlowClass, GasState, StarState
from app.services.logger import get_logger

logger = get_logger(__name__)


# ==================== Modelos de respuesta ====================

class StarStateResponse(BaseModel):
    """Estado estrella de una tubería."""
    label: str
    sigma: float
    tau: Optional[float] = None
    state: GasState


class JunctionResponse(BaseModel):
    """Salida de solve-junction."""
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "scenario": "stationary_three_pipes",
                "mode": "entropy_mix",
                "iterations": 0,
                "residual_norm": 0.0,
                "pipes": [{"label": "in", "sigma": 1.0, "tau": None, "state": {"rho": 1.0, "u": -0.2, "p": 1.0}}],
                "diagnostics": {"mass_flux": 0.0, "energy_flux": 0.0, "entropy_flux": 0.0},
            }
        }
    )

    scenario: str
    mode: str
    iterations: int
    residual_norm: float
    pipes: List[StarStateResponse]
    diagnostics: ConservationDiagnostics
    relative_flux_sums: List[float]
    standard_star: Optional[StarState] = None


class RunSummary(BaseModel):
    """Resumen de una corrida de simulate."""
    mode: str
    steps: int
    final_time: float
    max_conservation_drift: float
    wall_time_s: float
    files: List[str]


class SimulationResponse(BaseModel):
    scenario: str
    runs: List[RunSummary]


class ShockTubeResponse(BaseModel):
    scenario: str
    left: GasState
    right: GasState
    star: StarState
    waves: List[str]
    file: str


class VerifyResponse(BaseModel):
    seed: int
    trials: int
    passed: bool
    checks: List[CheckResult]


# ==================== Dependency ====================

# Variable global que será inyectada desde main.py
_simulation_service = None


def set_simulation_service(service):
    """Configura el servicio de simulación para ser usado por los comandos."""
    global _simulation_service
    _simulation_service = service


def get_simulation_service():
    """Obtiene la instancia del servicio de simulación."""
    if _simulation_service is None:
        raise RuntimeError("SimulationService no ha sido inicializado")
    return _simulation_service


def _emit(response: BaseModel):
    sys.stdout.write(response.model_dump_json(indent=2) + "\n")
    sys.stdout.flush()


# ==================== Comandos ====================

def cmd_solve_junction(config_path: str) -> int:
    """
    Resuelve la unión con los estados constantes del escenario.

    Returns:
        int: 0 si converge (los errores del solver se propagan y main los traduce a código de salida)
    """
    logger.info(f"solve-junction - Escenario: {config_path}")
    scenario = load_scenario(config_path)
    report = get_simulation_service().solve_junction(scenario)
    solution = report.solution
    outgoing = [k for k, cls in enumerate(report.problem.classes) if cls is FlowClass.OUTGOING]
    tau: Dict[int, float] = dict(zip(outgoing, solution.params.tau))
    _emit(JunctionResponse(
        scenario=scenario.name,
        mode=solution.mode.value,
        iterations=solution.iterations,
        residual_norm=solution.residual_norm,
        pipes=[
            StarStateResponse(label=label, sigma=sigma, tau=tau.get(k), state=state)
            for k, (label, sigma, state) in enumerate(zip(solution.labels, solution.params.sigma, solution.star_states))
        ],
        diagnostics=solution.diagnostics,
        relative_flux_sums=list(solution.diagnostics.relative()),
        standard_star=report.standard_star,
    ))
    return 0


def cmd_simulate(config_path: str, out: Optional[str] = None, mode_compare: bool = False) -> int:
    """
    Simula el escenario y escribe diagnósticos, perfiles, sondas y metadatos.

    Returns:
        int: 0 si todas las corridas terminan
    """
    logger.info(f"simulate - Escenario: {config_path} (mode_compare={mode_compare})")
    scenario = load_scenario(config_path)
    outcomes = get_simulation_service().simulate(scenario, scenario_to_config(scenario), out, mode_compare)
    runs = []
    for outcome in outcomes:
        result = outcome.result
        runs.append(RunSummary(
            mode=result.scenario.mode.value,
            steps=result.steps,
            final_time=result.final_time,
            max_conservation_drift=result.max_conservation_drift(),
            wall_time_s=result.wall_time_s,
            files=outcome.paths,
        ))
        logger.info(
            f"Corrida {result.scenario.mode.value}: pasos={result.steps}, t={result.final_time:.17g}, "
            f"deriva máx.={result.max_conservation_drift():.3e}"
        )
    _emit(SimulationResponse(scenario=scenario.name, runs=runs))
    return 0


def cmd_shock_tube(config_path: str, out: Optional[str] = None) -> int:
    """Resuelve el problema estándar equivalente y guarda el perfil exacto."""
    logger.info(f"shock-tube - Escenario: {config_path}")
    scenario = load_scenario(config_path)
    fan, path = get_simulation_service().shock_tube(scenario, out)
    _emit(ShockTubeResponse(
        scenario=scenario.name,
        left=fan.left,
        right=fan.right,
        star=fan.star,
        waves=[f"{wave.family}:{wave.kind.value}" for wave in fan.waves],
        file=path,
    ))
    return 0


def cmd_verify(seed: Optional[int] = None, trials: Optional[int] = None, jacobian=None) -> int:
    """
    Corre las verificaciones aleatorizadas.

    Returns:
        int: 0 si todas pasan, 1 en otro caso
    """
    logger.info(f"verify - seed={seed}, trials={trials}")
    report = get_simulation_service().verify(seed, trials, jacobian)
    if report.trials <= 0:
        logger.warning("no trials: el informe no contiene comprobaciones ejecutadas")
    _emit(VerifyResponse(seed=report.seed, trials=report.trials, passed=report.passed, checks=report.checks))
    return 0 if report.passed else 1
