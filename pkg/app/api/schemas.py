"""
Esquema del archivo de escenario (JSON) y carga en tres etapas: lectura,
validación de esquema (claves desconocidas rechazadas) y validación física.
"""
import json
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.config import settings
from app.models.domain import (
    BoundaryKind, CouplingMode, FlowClass, GasParams, GasState, InitialSegment, OutputPlan, PipeSetup,
    PipeSpec, Probe, Scenario, SourceModel, SplittingScheme,
)
from app.models.exception import DomainError, ScenarioError, ScenarioParseError, ScenarioPhysicsError, ScenarioSchemaError
from app.services.euler_core import sound_speed
from app.services.logger import get_logger

logger = get_logger(__name__)


# ==================== Modelos del archivo ====================

class StateSchema(BaseModel):
    """Estado primitivo constante."""
    model_config = ConfigDict(extra="forbid")

    rho: float
    u: float
    p: float


class SegmentSchema(StateSchema):
    """Tramo con estado constante sobre [x_start, x_end]."""
    x_start: float
    x_end: float


class PipeSchema(BaseModel):
    """Tubería del escenario."""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "label": "out",
                "nu_norm": 1.0,
                "gamma": 1.4,
                "c_v": 1.0,
                "length": 1.0,
                "cells": 200,
                "initial": {"rho": 1.0, "u": 0.1, "p": 1.0},
                "boundary": "outflow",
            }
        },
    )

    label: str
    nu_norm: float
    gamma: float
    c_v: float = 1.0
    length: float = Field(default_factory=lambda: settings.DEFAULT_PIPE_LENGTH)
    cells: int = Field(default_factory=lambda: settings.DEFAULT_CELLS)
    initial: Optional[StateSchema] = None
    segments: Optional[List[SegmentSchema]] = None
    boundary: BoundaryKind = BoundaryKind.OUTFLOW
    flow_hint: Optional[FlowClass] = None

    @model_validator(mode="after")
    def _check_initial_data(self):
        if (self.initial is None) == (self.segments is None):
            raise ValueError("se requiere exactamente uno de 'initial' o 'segments'")
        if self.segments is not None:
            if not self.segments:
                raise ValueError("'segments' no puede estar vacío")
            ordered = sorted(self.segments, key=lambda seg: seg.x_start)
            for seg in ordered:
                if not seg.x_end > seg.x_start:
                    raise ValueError(f"tramo vacío o invertido [{seg.x_start}, {seg.x_end}]")
            for first, second in zip(ordered, ordered[1:]):
                if second.x_start < first.x_end:
                    raise ValueError(f"tramos superpuestos [{first.x_start}, {first.x_end}] y [{second.x_start}, {second.x_end}]")
                if second.x_start > first.x_end:
                    raise ValueError(f"hueco entre {first.x_end} y {second.x_start}")
            if ordered[0].x_start != 0.0 or ordered[-1].x_end != self.length:
                raise ValueError(f"los tramos deben cubrir [0, {self.length}]")
        return self


class JunctionSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: CouplingMode = CouplingMode.ENTROPY_MIX


class SourceSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gravity: float = 0.0
    friction_factor: float = 0.0
    diameter: Optional[float] = None


class RunSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    end_time: float
    cfl: float = Field(default_factory=lambda: settings.DEFAULT_CFL)
    splitting: SplittingScheme = SplittingScheme.LIE
    source: SourceSchema = SourceSchema()


class ProbeSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pipe: str
    x: float


class OutputSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "output"
    sample_interval: Optional[float] = None
    probes: List[ProbeSchema] = []


class ScenarioFile(BaseModel):
    """Documento completo del escenario."""
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    pipes: List[PipeSchema] = Field(min_length=2)
    junction: JunctionSchema = JunctionSchema()
    run: RunSchema
    output: OutputSchema = OutputSchema()


# ==================== Conversión ====================

def _physics(document: ScenarioFile) -> Scenario:
    violations = []

    def attempt(path: str, build):
        try:
            return build()
        except DomainError as e:
            violations.append(f"{path}: {e.message}")
            return None

    labels = [pipe.label for pipe in document.pipes]
    if len(set(labels)) != len(labels):
        violations.append(f"pipes: etiquetas repetidas {labels}")

    setups = []
    for index, pipe in enumerate(document.pipes):
        path = f"pipes[{index}] ({pipe.label})"
        params = attempt(f"{path}.gamma", lambda: GasParams(gamma=pipe.gamma, c_v=pipe.c_v))
        spec = attempt(f"{path}.nu_norm", lambda: PipeSpec(label=pipe.label, nu_norm=pipe.nu_norm, params=params)) if params is not None else None
        if pipe.initial is not None:
            raw = [(0.0, pipe.length, pipe.initial)]
        else:
            raw = [(seg.x_start, seg.x_end, seg) for seg in sorted(pipe.segments, key=lambda seg: seg.x_start)]
        segments = []
        for k, (start, end, data) in enumerate(raw):
            state = attempt(f"{path}.initial[{k}]", lambda: GasState(rho=data.rho, u=data.u, p=data.p))
            if state is None:
                continue
            if params is not None and abs(state.u) >= sound_speed(state, params):
                violations.append(f"{path}.initial[{k}]: estado inicial no subsónico (u={state.u})")
            segments.append(InitialSegment(x_start=start, x_end=end, state=state))
        if spec is None or len(segments) != len(raw):
            continue
        setup = attempt(path, lambda: PipeSetup(
            spec=spec, length=pipe.length, cells=pipe.cells, initial=tuple(segments),
            boundary=pipe.boundary, flow_hint=pipe.flow_hint,
        ))
        if setup is not None:
            setups.append(setup)

    lengths = dict(zip(labels, (pipe.length for pipe in document.pipes)))
    for index, probe in enumerate(document.output.probes):
        if probe.pipe not in lengths:
            violations.append(f"output.probes[{index}]: tubería desconocida '{probe.pipe}'")
        elif not 0.0 <= probe.x <= lengths[probe.pipe]:
            violations.append(f"output.probes[{index}]: x={probe.x} fuera de [0, {lengths[probe.pipe]}]")

    run = document.run
    source = attempt("run.source", lambda: SourceModel(
        gravity=run.source.gravity, friction_factor=run.source.friction_factor, diameter=run.source.diameter,
    ))
    if violations:
        raise ScenarioPhysicsError(violations)

    output = OutputPlan(
        directory=document.output.directory,
        sample_interval=document.output.sample_interval,
        probes=tuple(Probe(pipe=probe.pipe, x=probe.x) for probe in document.output.probes),
    )
    try:
        return Scenario(
            name=document.name, pipes=tuple(setups), mode=document.junction.mode, end_time=run.end_time,
            cfl=run.cfl, source=source, splitting=run.splitting, output=output,
        )
    except DomainError as e:
        raise ScenarioPhysicsError([f"run: {e.message}"])


def scenario_from_config(config: dict) -> Scenario:
    """
    Valida un documento ya interpretado y construye el Scenario.

    Raises:
        ScenarioSchemaError: Si el documento no cumple el esquema (todas las violaciones juntas)
        ScenarioPhysicsError: Si viola invariantes físicos (con la ruta de cada violación)
    """
    try:
        document = ScenarioFile.model_validate(config)
    except ValidationError as e:
        violations = [f"{'.'.join(str(part) for part in error['loc']) or '<raíz>'}: {error['msg']}" for error in e.errors()]
        raise ScenarioSchemaError(violations)
    return _physics(document)


def parse_scenario(text: str) -> Scenario:
    """
    Interpreta el texto JSON de un escenario.

    Raises:
        ScenarioParseError: Si el texto no es JSON válido (con línea y columna)
    """
    try:
        config = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"JSON inválido: {e.msg}", e.lineno, e.colno)
    return scenario_from_config(config)


def load_scenario(path: str) -> Scenario:
    """
    Carga y valida un archivo de escenario.

    Args:
        path: Ruta del archivo JSON

    Returns:
        Scenario: Escenario validado con los valores por defecto aplicados

    Raises:
        ScenarioError: Si el archivo no se puede leer, interpretar o validar
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"No se pudo leer el escenario '{path}': {str(e)}")
    scenario = parse_scenario(text)
    logger.info(f"Escenario '{scenario.name}' cargado desde {path}: {len(scenario.pipes)} tuberías")
    return scenario


def scenario_to_config(scenario: Scenario) -> dict:
    """Eco sin pérdida del escenario: `scenario_from_config(scenario_to_config(s)) == s`."""
    document = ScenarioFile(
        name=scenario.name,
        pipes=[
            PipeSchema(
                label=setup.spec.label,
                nu_norm=setup.spec.nu_norm,
                gamma=setup.spec.params.gamma,
                c_v=setup.spec.params.c_v,
                length=setup.length,
                cells=setup.cells,
                segments=[
                    SegmentSchema(x_start=seg.x_start, x_end=seg.x_end, rho=seg.state.rho, u=seg.state.u, p=seg.state.p)
                    for seg in setup.initial
                ],
                boundary=setup.boundary,
                flow_hint=setup.flow_hint,
            )
            for setup in scenario.pipes
        ],
        junction=JunctionSchema(mode=scenario.mode),
        run=RunSchema(
            end_time=scenario.end_time,
            cfl=scenario.cfl,
            splitting=scenario.splitting,
            source=SourceSchema(
                gravity=scenario.source.gravity,
                friction_factor=scenario.source.friction_factor,
                diameter=scenario.source.diameter,
            ),
        ),
        output=OutputSchema(
            directory=scenario.output.directory,
            sample_interval=scenario.output.sample_interval,
            probes=[ProbeSchema(pipe=probe.pipe, x=probe.x) for probe in scenario.output.probes],
        ),
    )
    return document.model_dump(mode="json", exclude_none=True)
