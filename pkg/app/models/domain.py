import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.exception import DomainError, InvalidJunctionError


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


# ==================== Termodinámica ====================

class GasParams(BaseModel):
    """Parámetros de un gas politrópico ideal: exponente adiabático y calor específico."""
    model_config = ConfigDict(frozen=True)

    gamma: float
    c_v: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        if not _finite(self.gamma, self.c_v) or self.gamma <= 1.0:
            raise DomainError(f"El exponente adiabático debe ser > 1 (gamma={self.gamma})")
        if self.c_v <= 0.0:
            raise DomainError(f"La capacidad calorífica debe ser positiva (c_v={self.c_v})")
        return self

    @property
    def mu2(self) -> float:
        """mu² = (γ-1)/(γ+1)."""
        return (self.gamma - 1.0) / (self.gamma + 1.0)


class GasState(BaseModel):
    """Estado primitivo (densidad, velocidad, presión) de una celda o traza."""
    model_config = ConfigDict(frozen=True)

    rho: float
    u: float
    p: float

    @model_validator(mode="after")
    def _check(self):
        if not _finite(self.rho, self.u, self.p):
            raise DomainError(f"Estado no finito: rho={self.rho}, u={self.u}, p={self.p}")
        if self.rho <= 0.0 or self.p <= 0.0:
            raise DomainError(f"Estado fuera de Ω: rho={self.rho}, p={self.p}")
        return self

    @property
    def q(self) -> float:
        return self.rho * self.u

    def mirrored(self) -> "GasState":
        """Estado con la velocidad invertida (cambio de orientación del eje x)."""
        return GasState(rho=self.rho, u=-self.u, p=self.p)


class FlowClass(Enum):
    """Dirección del flujo respecto de la unión."""
    INCOMING = "incoming"
    OUTGOING = "outgoing"


class PipeSpec(BaseModel):
    """Geometría de una tubería y parámetros de su gas."""
    model_config = ConfigDict(frozen=True)

    label: str
    nu_norm: float
    params: GasParams

    @model_validator(mode="after")
    def _check(self):
        if not _finite(self.nu_norm) or self.nu_norm <= 0.0:
            raise DomainError(f"La sección de la tubería '{self.label}' debe ser positiva (nu_norm={self.nu_norm})")
        return self


# ==================== Problema de Riemann estándar ====================

class WaveKind(Enum):
    """Tipos de onda elemental."""
    SHOCK = "shock"
    RAREFACTION = "rarefaction"
    CONTACT = "contact"


class Wave(BaseModel):
    """Onda elemental de un abanico; head/tail coinciden para choques y contactos."""
    model_config = ConfigDict(frozen=True)

    family: int
    kind: WaveKind
    head_speed: float
    tail_speed: float


class StarState(BaseModel):
    """Región estrella del problema de Riemann: p*, u*, ρ_L*, ρ_R*."""
    model_config = ConfigDict(frozen=True)

    p_star: float
    u_star: float
    rho_L_star: float
    rho_R_star: float
    iterations: int = 0

    @model_validator(mode="after")
    def _check(self):
        if min(self.p_star, self.rho_L_star, self.rho_R_star) <= 0.0:
            raise DomainError("La región estrella debe tener presión y densidades positivas")
        return self

    def left_state(self) -> GasState:
        return GasState(rho=self.rho_L_star, u=self.u_star, p=self.p_star)

    def right_state(self) -> GasState:
        return GasState(rho=self.rho_R_star, u=self.u_star, p=self.p_star)


class WaveFan(BaseModel):
    """Solución autosemejante completa: estados extremos, región estrella y tres ondas."""
    model_config = ConfigDict(frozen=True)

    left: GasState
    right: GasState
    star: StarState
    waves: Tuple[Wave, Wave, Wave]
    params: GasParams


# ==================== Problema en la unión ====================

class CouplingMode(Enum):
    """Condiciones de acoplamiento disponibles."""
    ENTROPY_MIX = "entropy_mix"
    PRESSURE_EQUAL = "pressure_equal"
    DYNAMIC_PRESSURE_EQUAL = "dynamic_pressure_equal"


class JunctionProblem(BaseModel):
    """Problema de Riemann generalizado: N tuberías con trazas constantes y su clasificación."""
    model_config = ConfigDict(frozen=True)

    pipes: Tuple[PipeSpec, ...]
    traces: Tuple[GasState, ...]
    classes: Tuple[FlowClass, ...]
    mode: CouplingMode = CouplingMode.ENTROPY_MIX

    @model_validator(mode="after")
    def _check(self):
        n = len(self.pipes)
        if n < 2:
            raise InvalidJunctionError(f"Una unión necesita al menos dos tuberías (N={n})")
        if len(self.traces) != n or len(self.classes) != n:
            raise InvalidJunctionError("pipes, traces y classes deben tener la misma longitud")
        labels = [pipe.label for pipe in self.pipes]
        if len(set(labels)) != n:
            raise InvalidJunctionError(f"Etiquetas de tubería repetidas: {labels}")
        n_out = self.n_outgoing
        if not 0 < n_out < n:
            raise InvalidJunctionError(f"Se requiere N > N_o > 0 (N={n}, N_o={n_out})")
        if self.mode is not CouplingMode.ENTROPY_MIX and n_out != 1:
            raise InvalidJunctionError(f"El modo {self.mode.value} requiere exactamente una tubería saliente (N_o={n_out})")
        return self

    @property
    def n_pipes(self) -> int:
        return len(self.pipes)

    @property
    def n_outgoing(self) -> int:
        return sum(1 for cls in self.classes if cls is FlowClass.OUTGOING)

    @property
    def dimension(self) -> int:
        """d = N + N_o."""
        return self.n_pipes + self.n_outgoing

    def with_traces(self, traces) -> "JunctionProblem":
        return self.model_copy(update={"traces": tuple(traces)})

    def with_pipes(self, pipes) -> "JunctionProblem":
        return self.model_copy(update={"pipes": tuple(pipes)})

    def permuted(self, order: List[int]) -> "JunctionProblem":
        """Problema con las tuberías reordenadas según `order`."""
        return self.model_copy(update={
            "pipes": tuple(self.pipes[k] for k in order),
            "traces": tuple(self.traces[k] for k in order),
            "classes": tuple(self.classes[k] for k in order),
        })


class CouplingParams(BaseModel):
    """Parámetros de las curvas de Lax: σ (N presiones) y τ (N_o desplazamientos de densidad)."""
    model_config = ConfigDict(frozen=True)

    sigma: Tuple[float, ...]
    tau: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self):
        if not _finite(*self.sigma, *self.tau):
            raise DomainError("Parámetros de acoplamiento no finitos")
        if any(value <= 0.0 for value in self.sigma):
            raise DomainError(f"Todas las presiones σ deben ser positivas: {self.sigma}")
        return self

    def as_vector(self):
        return list(self.sigma) + list(self.tau)

    @classmethod
    def from_vector(cls, vector, n_pipes: int) -> "CouplingParams":
        values = [float(v) for v in vector]
        return cls(sigma=tuple(values[:n_pipes]), tau=tuple(values[n_pipes:]))


class ConservationDiagnostics(BaseModel):
    """Sumas de flujos en la unión: masa, energía y entropía."""
    model_config = ConfigDict(frozen=True)

    mass_flux: float
    energy_flux: float
    entropy_flux: float
    mass_scale: float
    energy_scale: float
    entropy_scale: float
    entropy_admissible: bool = True

    def relative(self) -> Tuple[float, float, float]:
        """Sumas relativas al mayor flujo individual de cada magnitud."""
        def rel(value: float, scale: float) -> float:
            return abs(value) / scale if scale > 0.0 else abs(value)
        return (
            rel(self.mass_flux, self.mass_scale),
            rel(self.energy_flux, self.energy_scale),
            rel(self.entropy_flux, self.entropy_scale),
        )


class StarSolution(BaseModel):
    """Solución del problema generalizado: parámetros raíz y estados estrella por tubería."""
    model_config = ConfigDict(frozen=True)

    mode: CouplingMode
    labels: Tuple[str, ...]
    params: CouplingParams
    star_states: Tuple[GasState, ...]
    residual_norm: float
    iterations: int
    diagnostics: ConservationDiagnostics


class LipschitzStats(BaseModel):
    """Estadísticas empíricas del cociente de perturbación."""
    model_config = ConfigDict(frozen=True)

    delta: float
    trials: int
    trace_ratio_max: Optional[float] = None
    trace_ratio_mean: Optional[float] = None
    nu_ratio_max: Optional[float] = None
    nu_ratio_mean: Optional[float] = None

    @property
    def empty(self) -> bool:
        return self.trace_ratio_max is None and self.nu_ratio_max is None


# ==================== Simulación ====================

class SourceModel(BaseModel):
    """Términos fuente locales: gravedad y fricción de Darcy."""
    model_config = ConfigDict(frozen=True)

    gravity: float = 0.0
    friction_factor: float = 0.0
    diameter: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if not _finite(self.gravity, self.friction_factor):
            raise DomainError("Parámetros de fuente no finitos")
        if self.friction_factor < 0.0:
            raise DomainError(f"El factor de fricción debe ser >= 0 (friction_factor={self.friction_factor})")
        if self.friction_factor > 0.0 and (self.diameter is None or self.diameter <= 0.0):
            raise DomainError("La fricción requiere un diámetro positivo")
        return self

    @property
    def active(self) -> bool:
        return self.gravity != 0.0 or self.friction_factor != 0.0


class SplittingScheme(Enum):
    """Esquemas de separación de operadores."""
    LIE = "lie"
    STRANG = "strang"


class BoundaryKind(Enum):
    """Condición en el extremo lejano de la tubería."""
    OUTFLOW = "outflow"
    WALL = "wall"


class InitialSegment(BaseModel):
    """Tramo con estado inicial constante sobre [x_start, x_end]."""
    model_config = ConfigDict(frozen=True)

    x_start: float
    x_end: float
    state: GasState


class PipeSetup(BaseModel):
    """Tubería de la red: especificación, malla, datos iniciales y frontera lejana."""
    model_config = ConfigDict(frozen=True)

    spec: PipeSpec
    length: float
    cells: int
    initial: Tuple[InitialSegment, ...]
    boundary: BoundaryKind = BoundaryKind.OUTFLOW
    flow_hint: Optional[FlowClass] = None

    @model_validator(mode="after")
    def _check(self):
        if self.length <= 0.0:
            raise DomainError(f"La longitud de '{self.spec.label}' debe ser positiva")
        if self.cells < 4:
            raise DomainError(f"La tubería '{self.spec.label}' necesita al menos 4 celdas")
        return self

    @property
    def dx(self) -> float:
        return self.length / self.cells


class Probe(BaseModel):
    """Punto de muestreo (tubería, posición)."""
    model_config = ConfigDict(frozen=True)

    pipe: str
    x: float


class OutputPlan(BaseModel):
    """Plan de salida: directorio, intervalo de muestreo y sondas."""
    model_config = ConfigDict(frozen=True)

    directory: str = "output"
    sample_interval: Optional[float] = None
    probes: Tuple[Probe, ...] = ()


class Scenario(BaseModel):
    """Descripción completa de una simulación."""
    model_config = ConfigDict(frozen=True)

    name: str = "scenario"
    pipes: Tuple[PipeSetup, ...]
    mode: CouplingMode = CouplingMode.ENTROPY_MIX
    end_time: float
    cfl: float = 0.9
    source: SourceModel = SourceModel()
    splitting: SplittingScheme = SplittingScheme.LIE
    output: OutputPlan = OutputPlan()

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 < self.cfl < 1.0:
            raise DomainError(f"cfl debe estar en (0, 1) (cfl={self.cfl})")
        if self.end_time <= 0.0:
            raise DomainError(f"end_time debe ser positivo (end_time={self.end_time})")
        return self

    def sample_times(self) -> List[float]:
        """Instantes de muestreo: 0, Δ, 2Δ, ..., end_time."""
        interval = self.output.sample_interval
        if interval is None or interval <= 0.0 or interval >= self.end_time:
            return [0.0, self.end_time]
        count = int(math.floor(self.end_time / interval + 1e-9))
        times = [k * interval for k in range(count + 1)]
        if self.end_time - times[-1] > 1e-12 * self.end_time:
            times.append(self.end_time)
        else:
            times[-1] = self.end_time
        return times


class DiagnosticsRecord(BaseModel):
    """Diagnóstico de la red en un instante de muestreo."""
    model_config = ConfigDict(frozen=True)

    time: float
    step: int
    mass: float
    energy: float
    entropy: float
    junction_mass_flux: float
    junction_energy_flux: float
    junction_entropy_flux: float
    max_mach: float
    total_variation: Dict[str, float] = Field(default_factory=dict)
    boundary_mass: float = 0.0
    boundary_energy: float = 0.0
    boundary_entropy: float = 0.0

    def csv_row(self) -> List[float]:
        return [
            self.time, self.mass, self.energy, self.entropy,
            self.junction_mass_flux, self.junction_energy_flux, self.junction_entropy_flux,
            self.max_mach,
        ]


DIAGNOSTICS_COLUMNS = (
    "time", "mass", "energy", "entropy",
    "junction_mass_flux", "junction_energy_flux", "junction_entropy_flux",
    "max_mach",
)

PROFILE_COLUMNS = ("time", "x", "rho", "u", "p", "s", "h")


# ==================== Verificación y metadatos ====================

class CheckResult(BaseModel):
    """Resultado de una verificación aleatorizada."""
    name: str
    passed: bool
    trials: int
    worst: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class VerificationReport(BaseModel):
    """Informe de `verify`."""
    seed: int
    trials: int
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class RunMetadata(BaseModel):
    """Metadatos de una corrida: eco de la configuración, tolerancias y versiones."""
    app: str
    version: str
    config: dict
    mode: str
    tolerances: Dict[str, float]
    versions: Dict[str, str]
    wall_time_s: float
    steps: int
    final_time: float
    max_conservation_drift: float
    error: Optional[str] = None
