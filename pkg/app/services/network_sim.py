"""
Simulación en volúmenes finitos de una red en estrella.

Cada tubería se discretiza con celdas uniformes sobre [0, L] (x = 0 es el
extremo de la unión) y guarda sus variables conservativas en un arreglo
(3, M). Los flujos interiores son de Godunov con el solver exacto; en la unión
se usa F(Y*_i) del problema de Riemann generalizado; los términos fuente se
integran por separación de operadores.
"""
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.models.domain import (
    BoundaryKind, CouplingMode, DiagnosticsRecord, FlowClass, GasState, JunctionProblem,
    PipeSetup, Scenario, SourceModel, SplittingScheme, StarSolution,
)
from app.models.exception import AppBaseException, DomainError, InvalidCellError, SimulationError, StagnantFlowError
from app.services.euler_core import (
    classify_flow, conservative_to_primitive_arrays, enthalpy_kernel, entropy_kernel, flux_kernel,
    invalid_cells, primitive_to_conservative_arrays, sound_speed_kernel,
)
from app.services.junction_coupling import solve_junction
from app.services.logger import get_logger, log_exception
from app.services.riemann_solver import sample_arrays, solve_star_arrays

logger = get_logger(__name__)


# ==================== Malla ====================

class GridPipe:
    """Tubería discretizada: estados conservativos por celda y política de frontera lejana."""

    def __init__(self, setup: PipeSetup):
        self.setup = setup
        self.spec = setup.spec
        self.cells = setup.cells
        self.dx = setup.dx
        self.x = (np.arange(self.cells) + 0.5) * self.dx
        self.flow_class: Optional[FlowClass] = None
        self.conservative = self._initial_state(setup)

    def _initial_state(self, setup: PipeSetup) -> np.ndarray:
        rho = np.full(self.cells, np.nan)
        u = np.full(self.cells, np.nan)
        p = np.full(self.cells, np.nan)
        for position, segment in enumerate(setup.initial):
            last = position == len(setup.initial) - 1
            inside = (self.x >= segment.x_start) & ((self.x <= segment.x_end) if last else (self.x < segment.x_end))
            rho[inside] = segment.state.rho
            u[inside] = segment.state.u
            p[inside] = segment.state.p
        missing = np.flatnonzero(np.isnan(rho))
        if missing.size:
            raise DomainError(f"La tubería '{self.spec.label}' tiene {missing.size} celdas sin dato inicial")
        return np.array(primitive_to_conservative_arrays(rho, u, p, self.gamma))

    @property
    def label(self) -> str:
        return self.spec.label

    @property
    def gamma(self) -> float:
        return self.spec.params.gamma

    @property
    def nu_norm(self) -> float:
        return self.spec.nu_norm

    def primitives(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rho, q, energy = self.conservative
        return conservative_to_primitive_arrays(rho, q, energy, self.gamma)

    def trace(self) -> GasState:
        """Traza en x = 0+: el promedio de la primera celda."""
        rho, u, p = (float(v[0]) for v in self.primitives())
        return GasState(rho=rho, u=u, p=p)

    def ghost(self, rho: float, u: float, p: float) -> Tuple[float, float, float]:
        if self.setup.boundary is BoundaryKind.WALL:
            return rho, -u, p
        return rho, u, p

    def check(self):
        rho, _, p = self.primitives()
        bad = invalid_cells(rho, p)
        if bad.size:
            raise InvalidCellError(self.label, int(bad[0]))

    def copy(self) -> "GridPipe":
        clone = GridPipe.__new__(GridPipe)
        clone.__dict__.update(self.__dict__)
        clone.conservative = self.conservative.copy()
        return clone


class PipeNetwork:
    """Red en estrella: tuberías, modo de acoplamiento y reloj de la simulación."""

    def __init__(self, pipes: Sequence[GridPipe], mode: CouplingMode = CouplingMode.ENTROPY_MIX):
        self.pipes = list(pipes)
        self.mode = mode
        self.time = 0.0
        self.step = 0
        self.boundary_mass = 0.0
        self.boundary_energy = 0.0
        self.boundary_entropy = 0.0
        self.last_solution: Optional[StarSolution] = None

    def pipe(self, label: str) -> GridPipe:
        for pipe in self.pipes:
            if pipe.label == label:
                return pipe
        raise KeyError(label)

    def classify(self) -> Tuple[FlowClass, ...]:
        """
        Reclasifica cada tubería según la velocidad de su primera celda.

        Con u = 0 exacto se conserva la clase anterior; sin clase anterior se usa
        la indicación del escenario (flow_hint).

        Raises:
            StagnantFlowError: Si u = 0 sin clase anterior ni indicación
            SupersonicStateError: Si la traza no es subsónica
        """
        classes = []
        for pipe in self.pipes:
            trace = pipe.trace()
            if trace.u == 0.0:
                fallback = pipe.flow_class or pipe.setup.flow_hint
                if fallback is None:
                    raise StagnantFlowError(f"Velocidad nula en la traza de '{pipe.label}' sin clasificación previa")
                cls = fallback
            else:
                cls = classify_flow(trace, pipe.spec.params)
            if pipe.flow_class is not None and cls is not pipe.flow_class:
                logger.info(f"Tubería '{pipe.label}': la clase cambia de {pipe.flow_class.value} a {cls.value} (t={self.time:.6g})")
            pipe.flow_class = cls
            classes.append(cls)
        return tuple(classes)

    def junction_problem(self) -> JunctionProblem:
        classes = self.classify()
        return JunctionProblem(
            pipes=tuple(pipe.spec for pipe in self.pipes),
            traces=tuple(pipe.trace() for pipe in self.pipes),
            classes=classes,
            mode=self.mode,
        )

    def copy(self) -> "PipeNetwork":
        clone = PipeNetwork([pipe.copy() for pipe in self.pipes], self.mode)
        for name in ("time", "step", "boundary_mass", "boundary_energy", "boundary_entropy", "last_solution"):
            setattr(clone, name, getattr(self, name))
        return clone


def build_network(scenario: Scenario) -> PipeNetwork:
    """Construye la red discretizada a partir del escenario."""
    network = PipeNetwork([GridPipe(setup) for setup in scenario.pipes], scenario.mode)
    logger.info(f"Red construida: {len(network.pipes)} tuberías, modo {scenario.mode.value}")
    return network


# ==================== Flujos ====================

def godunov_flux_arrays(rhoL, uL, pL, rhoR, uR, pR, gamma: float):
    """
    Flujo de Godunov exacto para arreglos de interfaces.

    Returns:
        Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray, np.ndarray]]: flujo (3, n) y estado muestreado en ξ = 0
    """
    star = solve_star_arrays(rhoL, uL, pL, rhoR, uR, pR, gamma)
    rho, u, p = sample_arrays(star, rhoL, uL, pL, rhoR, uR, pR, gamma, 0.0)
    return np.array(flux_kernel(rho, u, p, gamma)), (rho, u, p)


def godunov_interface_flux(left: GasState, right: GasState, params) -> Tuple[float, float, float]:
    """
    Flujo numérico F(W(0; U_L, U_R)) de una interfaz.

    Raises:
        VacuumError: Si el par genera vacío
    """
    flux, _ = godunov_flux_arrays(left.rho, left.u, left.p, right.rho, right.u, right.p, params.gamma)
    return float(flux[0]), float(flux[1]), float(flux[2])


def junction_boundary_flux(network: PipeNetwork) -> Tuple[List[np.ndarray], StarSolution]:
    """
    Flujos F(Y*_i) en el extremo de la unión de cada tubería.

    Returns:
        Tuple[List[np.ndarray], StarSolution]: Flujo conservativo por tubería y solución de la unión
    """
    problem = network.junction_problem()
    solution = solve_junction(problem)
    fluxes = [
        np.array(flux_kernel(state.rho, state.u, state.p, pipe.gamma))
        for pipe, state in zip(network.pipes, solution.star_states)
    ]
    network.last_solution = solution
    return fluxes, solution


def cfl_dt(network: PipeNetwork, cfl: float) -> float:
    """dt = cfl · min dx / max(|u - c|, |u + c|) sobre todas las celdas."""
    limits = []
    for pipe in network.pipes:
        rho, u, p = pipe.primitives()
        speed = np.abs(u) + sound_speed_kernel(rho, p, pipe.gamma)
        limits.append(pipe.dx / float(np.max(speed)))
    return cfl * min(limits)


class StepFluxes(NamedTuple):
    """Flujos de frontera de un paso hiperbólico (positivos hacia fuera de la tubería)."""
    junction: List[np.ndarray]
    far_end: List[np.ndarray]
    far_end_entropy: List[float]
    solution: StarSolution


def _pipe_fluxes(pipe: GridPipe, junction_flux: np.ndarray):
    rho, u, p = pipe.primitives()
    ghost = pipe.ghost(float(rho[-1]), float(u[-1]), float(p[-1]))
    left = (rho, u, p)
    right = (
        np.append(rho[1:], ghost[0]),
        np.append(u[1:], ghost[1]),
        np.append(p[1:], ghost[2]),
    )
    interior, sampled = godunov_flux_arrays(*left, *right, pipe.gamma)
    fluxes = np.empty((3, pipe.cells + 1))
    fluxes[:, 0] = junction_flux
    fluxes[:, 1:] = interior
    s_rho, s_u, s_p = (v[-1] for v in sampled)
    far_entropy = float(s_rho * s_u * entropy_kernel(s_rho, s_p, pipe.gamma, pipe.spec.params.c_v))
    return fluxes, far_entropy


def advance_hyperbolic(network: PipeNetwork, dt: float) -> StepFluxes:
    """
    Paso de Godunov conservativo (G = 0) en todas las tuberías.

    Raises:
        InvalidCellError: Si alguna celda queda con densidad o presión no positiva
    """
    junction, solution = junction_boundary_flux(network)
    far_end, far_entropy = [], []
    updates = []
    for pipe, flux in zip(network.pipes, junction):
        fluxes, entropy_flux = _pipe_fluxes(pipe, flux)
        updates.append(fluxes)
        far_end.append(fluxes[:, -1].copy())
        far_entropy.append(entropy_flux)
    for pipe, fluxes in zip(network.pipes, updates):
        ratio = dt / pipe.dx
        pipe.conservative = pipe.conservative - ratio * (fluxes[:, 1:] - fluxes[:, :-1])
        pipe.check()
    for pipe, flux, entropy_flux in zip(network.pipes, far_end, far_entropy):
        network.boundary_mass += dt * pipe.nu_norm * float(flux[0])
        network.boundary_energy += dt * pipe.nu_norm * float(flux[2])
        network.boundary_entropy += dt * pipe.nu_norm * entropy_flux
    return StepFluxes(junction, far_end, far_entropy, solution)


# ==================== Términos fuente ====================

def source_terms(conservative: np.ndarray, model: SourceModel) -> np.ndarray:
    """G(U) = (0, -ρg - λ_f q|q|/(2Dρ), -q g)."""
    rho, q, _ = conservative
    momentum = -rho * model.gravity
    if model.friction_factor > 0.0:
        momentum = momentum - model.friction_factor * q * np.abs(q) / (2.0 * model.diameter * rho)
    return np.array([np.zeros_like(rho), momentum, -q * model.gravity])


def advance_source(network: PipeNetwork, dt: float, model: SourceModel) -> PipeNetwork:
    """
    Integra U' = G(U) en cada celda con un paso de Heun (SSPRK22).

    Raises:
        InvalidCellError: Si el paso deja celdas inválidas
    """
    if not model.active:
        return network
    for pipe in network.pipes:
        state = pipe.conservative
        stage = state + dt * source_terms(state, model)
        pipe.conservative = 0.5 * (state + stage + dt * source_terms(stage, model))
        pipe.check()
    return network


def split_step(network: PipeNetwork, dt: float,
               hyperbolic: Callable[[PipeNetwork, float], object],
               source: Callable[[PipeNetwork, float], object],
               splitting: SplittingScheme = SplittingScheme.LIE):
    """
    Un paso de separación de operadores.

    LIE: hiperbólico(dt) y luego fuente(dt). STRANG: fuente(dt/2), hiperbólico(dt), fuente(dt/2).

    Returns:
        Lo que devuelva el operador hiperbólico
    """
    if splitting is SplittingScheme.STRANG:
        source(network, 0.5 * dt)
        result = hyperbolic(network, dt)
        source(network, 0.5 * dt)
        return result
    result = hyperbolic(network, dt)
    source(network, dt)
    return result


# ==================== Diagnósticos ====================

def total_variation(pipe: GridPipe) -> float:
    return float(np.sum(np.abs(np.diff(pipe.conservative, axis=1))))


def network_totals(network: PipeNetwork) -> Tuple[float, float, float]:
    """Masa Σ‖ν‖∫ρ, energía Σ‖ν‖∫E y entropía Σ‖ν‖∫ρs."""
    mass = energy = entropy = 0.0
    for pipe in network.pipes:
        rho, _, energy_density = pipe.conservative
        _, _, p = pipe.primitives()
        weight = pipe.nu_norm * pipe.dx
        mass += weight * float(np.sum(rho))
        energy += weight * float(np.sum(energy_density))
        entropy += weight * float(np.sum(rho * entropy_kernel(rho, p, pipe.gamma, pipe.spec.params.c_v)))
    return mass, energy, entropy


def diagnostics(network: PipeNetwork) -> DiagnosticsRecord:
    """
    Registro de diagnóstico calculado sobre los mismos estados que avanza el esquema.

    Las sumas de la unión se recalculan con las trazas actuales, no con las del paso anterior.
    """
    _, solution = junction_boundary_flux(network)
    junction = solution.diagnostics
    mass, energy, entropy = network_totals(network)
    max_mach = 0.0
    for pipe in network.pipes:
        rho, u, p = pipe.primitives()
        max_mach = max(max_mach, float(np.max(np.abs(u) / sound_speed_kernel(rho, p, pipe.gamma))))
    return DiagnosticsRecord(
        time=network.time,
        step=network.step,
        mass=mass,
        energy=energy,
        entropy=entropy,
        junction_mass_flux=junction.mass_flux,
        junction_energy_flux=junction.energy_flux,
        junction_entropy_flux=junction.entropy_flux,
        max_mach=max_mach,
        total_variation={pipe.label: total_variation(pipe) for pipe in network.pipes},
        boundary_mass=network.boundary_mass,
        boundary_energy=network.boundary_energy,
        boundary_entropy=network.boundary_entropy,
    )


class ProfileSnapshot(NamedTuple):
    """Perfil (x, ρ, u, p, s, h) de una tubería en un instante."""
    time: float
    pipe: str
    x: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    p: np.ndarray
    s: np.ndarray
    h: np.ndarray

    def table(self) -> np.ndarray:
        return np.column_stack([np.full_like(self.x, self.time), self.x, self.rho, self.u, self.p, self.s, self.h])


def profile_snapshot(network: PipeNetwork, pipe: GridPipe) -> ProfileSnapshot:
    rho, u, p = pipe.primitives()
    params = pipe.spec.params
    return ProfileSnapshot(
        time=network.time, pipe=pipe.label, x=pipe.x.copy(), rho=rho.copy(), u=u.copy(), p=p.copy(),
        s=entropy_kernel(rho, p, params.gamma, params.c_v),
        h=enthalpy_kernel(rho, u, p, params.gamma),
    )


def probe_rows(network: PipeNetwork, scenario: Scenario) -> List[List[float]]:
    """Filas (time, probe, x, rho, u, p) de las sondas del escenario."""
    rows = []
    for index, probe in enumerate(scenario.output.probes):
        pipe = network.pipe(probe.pipe)
        cell = min(max(int(probe.x / pipe.dx), 0), pipe.cells - 1)
        rho, u, p = pipe.primitives()
        rows.append([network.time, float(index), probe.x, float(rho[cell]), float(u[cell]), float(p[cell])])
    return rows


# ==================== Ejecución ====================

class SimulationResult:
    """Resultados de `run_scenario`: series de diagnóstico, perfiles, sondas y red final."""

    def __init__(self, scenario: Scenario, network: PipeNetwork):
        self.scenario = scenario
        self.network = network
        self.records: List[DiagnosticsRecord] = []
        self.step_records: List[DiagnosticsRecord] = []
        self.profiles: List[ProfileSnapshot] = []
        self.probes: List[List[float]] = []
        self.wall_time_s = 0.0

    @property
    def steps(self) -> int:
        return self.network.step

    @property
    def final_time(self) -> float:
        return self.network.time

    def conservation_drift(self) -> Dict[str, float]:
        """Deriva relativa de masa y energía corregida por los flujos de frontera."""
        if not self.records:
            return {"mass": 0.0, "energy": 0.0}
        first, last = self.records[0], self.records[-1]
        mass = abs(last.mass + last.boundary_mass - first.mass - first.boundary_mass) / abs(first.mass)
        energy = abs(last.energy + last.boundary_energy - first.energy - first.boundary_energy) / abs(first.energy)
        return {"mass": mass, "energy": energy}

    def max_conservation_drift(self) -> float:
        drift = self.conservation_drift()
        if self.scenario.source.active:
            # la fuente modifica momento y energía: solo la masa se conserva
            return drift["mass"]
        return max(drift.values())

    def sample(self):
        self.records.append(diagnostics(self.network))
        for pipe in self.network.pipes:
            self.profiles.append(profile_snapshot(self.network, pipe))
        self.probes.extend(probe_rows(self.network, self.scenario))


def run_scenario(scenario: Scenario, record_steps: bool = False) -> SimulationResult:
    """
    Avanza el escenario hasta end_time.

    Args:
        scenario: Escenario validado
        record_steps: Si True guarda además un diagnóstico por paso

    Returns:
        SimulationResult: Diagnósticos en los instantes de muestreo y red final

    Raises:
        SimulationError: Con la causa, el paso, el tiempo y los resultados parciales
    """
    start_time = time.perf_counter()
    network = build_network(scenario)
    result = SimulationResult(scenario, network)
    sample_times = scenario.sample_times()
    next_sample = 1

    def hyperbolic(net: PipeNetwork, dt: float):
        return advance_hyperbolic(net, dt)

    def source(net: PipeNetwork, dt: float):
        return advance_source(net, dt, scenario.source)

    try:
        result.sample()
        if record_steps:
            result.step_records.append(result.records[-1])
        while next_sample < len(sample_times):
            target = sample_times[next_sample]
            dt = cfl_dt(network, scenario.cfl)
            hit = network.time + dt >= target
            if hit:
                dt = target - network.time
            split_step(network, dt, hyperbolic, source, scenario.splitting)
            network.step += 1
            network.time = target if hit else network.time + dt
            if record_steps:
                result.step_records.append(diagnostics(network))
            if hit:
                result.sample()
                next_sample += 1
                logger.debug(f"Muestra t={network.time:.6g} (paso {network.step})")
    except AppBaseException as e:
        result.wall_time_s = time.perf_counter() - start_time
        logger.error(f"Simulación interrumpida en el paso {network.step} (t={network.time:.6g}): {e.message}")
        raise SimulationError(e, network.step, network.time, result)
    except np.linalg.LinAlgError as e:
        log_exception(logger, e, "run_scenario")
        result.wall_time_s = time.perf_counter() - start_time
        raise SimulationError(DomainError(f"Fallo de álgebra lineal: {str(e)}"), network.step, network.time, result)

    result.wall_time_s = time.perf_counter() - start_time
    logger.info(
        f"Simulación '{scenario.name}' completada - Pasos: {network.step} - t={network.time:.6g} - "
        f"Deriva máx.: {result.max_conservation_drift():.3e} - Duration: {result.wall_time_s * 1000:.2f}ms"
    )
    return result


# ==================== Dominio único (comparación) ====================

def single_domain_dt(conservative: np.ndarray, gamma: float, dx: float, cfl: float) -> float:
    rho, u, p = conservative_to_primitive_arrays(*conservative, gamma)
    return cfl * dx / float(np.max(np.abs(u) + sound_speed_kernel(rho, p, gamma)))


def advance_single_domain(conservative: np.ndarray, gamma: float, dx: float, dt: float) -> np.ndarray:
    """
    Paso de Godunov en un tubo recto con fronteras de salida libre.

    Es la referencia del tubo recto con el que se compara la red de dos tuberías reflejadas.
    """
    rho, u, p = conservative_to_primitive_arrays(*conservative, gamma)
    rho_ext = np.concatenate([rho[:1], rho, rho[-1:]])
    u_ext = np.concatenate([u[:1], u, u[-1:]])
    p_ext = np.concatenate([p[:1], p, p[-1:]])
    fluxes, _ = godunov_flux_arrays(rho_ext[:-1], u_ext[:-1], p_ext[:-1], rho_ext[1:], u_ext[1:], p_ext[1:], gamma)
    updated = conservative - dt / dx * (fluxes[:, 1:] - fluxes[:, :-1])
    bad = invalid_cells(*conservative_to_primitive_arrays(*updated, gamma)[::2])
    if bad.size:
        raise InvalidCellError("single_domain", int(bad[0]))
    return updated


def mirrored_network_to_domain(network: PipeNetwork) -> np.ndarray:
    """
    Reúne una red de dos tuberías (derecha, izquierda reflejada) en un tubo recto.

    Returns:
        np.ndarray: Estados conservativos (3, M_izq + M_der) ordenados de izquierda a derecha
    """
    right, left = network.pipes
    mirrored = left.conservative[:, ::-1].copy()
    mirrored[1] = -mirrored[1]
    return np.concatenate([mirrored, right.conservative], axis=1)
