import json
from pathlib import Path

import numpy as np
import pytest

from app.models.domain import (
    FlowClass, GasParams, GasState, InitialSegment, JunctionProblem, PipeSetup, PipeSpec, Scenario,
)
from app.services.junction_coupling import coupled_stationary_traces

SCENARIOS_DIR = Path(__file__).resolve().parents[2] / "scenarios"


@pytest.fixture
def air() -> GasParams:
    return GasParams(gamma=1.4, c_v=1.0)


@pytest.fixture
def sod_pair():
    return GasState(rho=1.0, u=0.0, p=1.0), GasState(rho=0.125, u=0.0, p=0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def three_pipe_specs(air):
    return (
        PipeSpec(label="out", nu_norm=1.5, params=air),
        PipeSpec(label="in_a", nu_norm=1.0, params=air),
        PipeSpec(label="in_b", nu_norm=0.8, params=GasParams(gamma=1.3, c_v=1.2)),
    )


@pytest.fixture
def stationary_problem(three_pipe_specs) -> JunctionProblem:
    """Unión de tres tuberías (una saliente) con Φ(Ū) = 0."""
    classes = (FlowClass.OUTGOING, FlowClass.INCOMING, FlowClass.INCOMING)
    traces = coupled_stationary_traces(three_pipe_specs, classes, 4.0, [(1.0, -0.2), (0.8, -0.15)])
    return JunctionProblem(pipes=three_pipe_specs, traces=traces, classes=classes)


@pytest.fixture
def perturbed_problem(stationary_problem) -> JunctionProblem:
    """Estado acoplado con las presiones de las trazas perturbadas en 1e-3."""
    factors = (1.0 + 1e-3, 1.0 - 1e-3, 1.0 + 1e-3)
    traces = [GasState(rho=t.rho, u=t.u, p=t.p * f) for t, f in zip(stationary_problem.traces, factors)]
    return stationary_problem.with_traces(traces)


@pytest.fixture
def unbalanced_problem(air) -> JunctionProblem:
    """Tres tuberías de aire con presiones casi iguales y flujo másico desbalanceado."""
    pipes = (
        PipeSpec(label="out", nu_norm=1.5, params=air),
        PipeSpec(label="in_a", nu_norm=1.0, params=air),
        PipeSpec(label="in_b", nu_norm=0.8, params=air),
    )
    traces = (
        GasState(rho=1.0, u=0.2, p=1.0),
        GasState(rho=1.2, u=-0.2, p=1.01),
        GasState(rho=0.8, u=-0.18, p=0.99),
    )
    classes = (FlowClass.OUTGOING, FlowClass.INCOMING, FlowClass.INCOMING)
    return JunctionProblem(pipes=pipes, traces=traces, classes=classes)


def make_setup(spec: PipeSpec, state: GasState, cells: int = 50, length: float = 1.0, **kwargs) -> PipeSetup:
    return PipeSetup(
        spec=spec, length=length, cells=cells,
        initial=(InitialSegment(x_start=0.0, x_end=length, state=state),),
        **kwargs,
    )


@pytest.fixture
def stationary_scenario(stationary_problem) -> Scenario:
    setups = tuple(
        make_setup(pipe, trace, cells=40)
        for pipe, trace in zip(stationary_problem.pipes, stationary_problem.traces)
    )
    return Scenario(name="stationary", pipes=setups, end_time=0.2)


@pytest.fixture
def perturbed_scenario(stationary_problem) -> Scenario:
    """Escenario homogéneo de tres tuberías con un pulso de presión en la entrante 'in_a'."""
    setups = []
    for pipe, trace in zip(stationary_problem.pipes, stationary_problem.traces):
        if pipe.label == "in_a":
            bump = GasState(rho=trace.rho * 1.05, u=trace.u, p=trace.p * 1.1)
            initial = (
                InitialSegment(x_start=0.0, x_end=0.2, state=trace),
                InitialSegment(x_start=0.2, x_end=0.4, state=bump),
                InitialSegment(x_start=0.4, x_end=1.0, state=trace),
            )
            setups.append(PipeSetup(spec=pipe, length=1.0, cells=50, initial=initial))
        else:
            setups.append(make_setup(pipe, trace, cells=50))
    return Scenario(name="perturbed", pipes=tuple(setups), end_time=0.25, cfl=0.45)


@pytest.fixture
def write_scenario(tmp_path):
    """Escribe un documento de escenario en un archivo temporal y devuelve su ruta."""
    def _write(document, name: str = "scenario.json") -> str:
        path = tmp_path / name
        text = document if isinstance(document, str) else json.dumps(document, indent=2)
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def minimal_document(tmp_path) -> dict:
    return {
        "pipes": [
            {"label": "a", "nu_norm": 1.0, "gamma": 1.4, "initial": {"rho": 1.0, "u": 0.1, "p": 1.0}},
            {"label": "b", "nu_norm": 1.0, "gamma": 1.4, "initial": {"rho": 1.0, "u": -0.1, "p": 1.0}},
        ],
        "run": {"end_time": 0.1},
        "output": {"directory": str(tmp_path / "out")},
    }
