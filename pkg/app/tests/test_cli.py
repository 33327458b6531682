import json

import numpy as np
import pytest

from app.api.commands import cmd_verify
from app.main import exit_code_for, main, report_error, startup
from app.models.exception import (
    AppBaseException, DegenerateInflowError, FlowReversalError, InvalidCellError, NoConvergenceError,
    ScenarioSchemaError, SimulationError, StagnantFlowError, VacuumError,
)
from app.tests.conftest import SCENARIOS_DIR
from app.tests.test_verification import flipped_enthalpy_tau


def error_payload(err: str) -> dict:
    lines = [line for line in err.splitlines() if line.startswith('{"error"')]
    assert lines, err
    return json.loads(lines[-1])


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ==================== Códigos de salida ====================

@pytest.mark.parametrize("exc,code", [
    (NoConvergenceError(), 2),
    (FlowReversalError(pipes=["a"]), 3),
    (DegenerateInflowError(), 4),
    (StagnantFlowError(), 6),
    (ScenarioSchemaError(["run: falta"]), 7),
    (VacuumError(), 8),
    (InvalidCellError("a", 3), 8),
    (AppBaseException(), 1),
    (RuntimeError("x"), 1),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_simulation_error_uses_cause(capsys):
    error = SimulationError(FlowReversalError("inversión", ["b"]), 12, 0.25)
    code = exit_code_for(error)
    assert code == 3
    report_error(error, code)
    payload = error_payload(capsys.readouterr().err)
    assert payload["error"] == "FlowReversalError"
    assert (payload["step"], payload["time"]) == (12, 0.25)


# ==================== solve-junction ====================

def test_solve_junction_stationary(capsys):
    code, out, _ = run_cli(capsys, "solve-junction", str(SCENARIOS_DIR / "stationary_three_pipes.json"))
    assert code == 0
    data = json.loads(out)
    assert data["iterations"] == 0
    assert [pipe["label"] for pipe in data["pipes"]] == ["in_a", "in_b", "out"]
    assert [pipe["tau"] is None for pipe in data["pipes"]] == [True, True, False]
    assert max(data["relative_flux_sums"]) <= 1e-9
    assert data["standard_star"] is None


def test_all_incoming_exit_code(capsys, write_scenario, minimal_document):
    minimal_document["pipes"][0]["initial"]["u"] = -0.1
    code, out, err = run_cli(capsys, "solve-junction", write_scenario(minimal_document))
    assert code == 5
    assert out == ""
    payload = error_payload(err)
    assert payload["error"] == "InvalidJunctionError" and payload["exit_code"] == 5


def test_stagnant_without_hint_exit_code(capsys, write_scenario, minimal_document):
    minimal_document["pipes"][0]["initial"]["u"] = 0.0
    code, _, err = run_cli(capsys, "solve-junction", write_scenario(minimal_document))
    assert code == 6
    assert error_payload(err)["error"] == "StagnantFlowError"


def test_scenario_error_exit_code(capsys, write_scenario, minimal_document):
    minimal_document["pipes"][0]["gamma"] = 0.9
    code, _, err = run_cli(capsys, "solve-junction", write_scenario(minimal_document))
    assert code == 7
    payload = error_payload(err)
    assert payload["error"] == "ScenarioPhysicsError"
    assert "pipes[0] (a).gamma" in payload["detail"]


def test_parse_error_exit_code(capsys, write_scenario):
    code, _, err = run_cli(capsys, "solve-junction", write_scenario("{ not json"))
    assert code == 7
    assert error_payload(err)["error"] == "ScenarioParseError"


# ==================== simulate ====================

def test_simulate_mode_compare(capsys, tmp_path):
    out_dir = tmp_path / "compare"
    code, out, _ = run_cli(capsys, "simulate", str(SCENARIOS_DIR / "stationary_three_pipes.json"),
                           "--mode-compare", "--out", str(out_dir))
    assert code == 0
    data = json.loads(out)
    assert [run["mode"] for run in data["runs"]] == ["entropy_mix", "pressure_equal"]
    for suffix in ("_entropy_mix", "_pressure_equal"):
        assert (out_dir / f"diagnostics{suffix}.csv").exists()
        metadata = json.loads((out_dir / f"metadata{suffix}.json").read_text(encoding="utf-8"))
        assert metadata["config"]["junction"]["mode"] == suffix[1:]
        assert metadata["error"] is None
    assert (out_dir / "probes_entropy_mix.csv").exists()


def test_simulate_stationary_is_unchanged(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "simulate", str(SCENARIOS_DIR / "stationary_three_pipes.json"), "--out", str(tmp_path))
    assert code == 0
    table = np.loadtxt(tmp_path / "diagnostics.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(table[:, 0], [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], rtol=1e-15)
    # todas las columnas salvo el tiempo son idénticas en cada muestra
    assert np.all(table[1:, 1:] == table[0, 1:])
    assert json.loads(out)["runs"][0]["max_conservation_drift"] <= 1e-12


def test_simulate_is_deterministic(capsys, tmp_path):
    config = str(SCENARIOS_DIR / "perturbed_three_pipes.json")
    for name in ("first", "second"):
        code, _, _ = run_cli(capsys, "simulate", config, "--out", str(tmp_path / name))
        assert code == 0
    outputs = sorted(path.name for path in (tmp_path / "first").glob("*.csv"))
    assert "diagnostics.csv" in outputs
    for name in outputs:
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_simulate_output_write_error(capsys, tmp_path, write_scenario, minimal_document):
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    minimal_document["pipes"][0]["cells"] = 10
    minimal_document["pipes"][1]["cells"] = 10
    code, _, err = run_cli(capsys, "simulate", write_scenario(minimal_document), "--out", str(blocker / "sub"))
    assert code == 9
    assert error_payload(err)["error"] == "OutputWriteError"


# ==================== shock-tube ====================

def test_shock_tube_matches_junction(capsys, tmp_path):
    config = str(SCENARIOS_DIR / "sod_mirror.json")
    code, out, _ = run_cli(capsys, "shock-tube", config, "--out", str(tmp_path))
    assert code == 0
    shock = json.loads(out)
    assert shock["waves"] == ["1:rarefaction", "2:contact", "3:shock"]
    assert shock["star"]["p_star"] == pytest.approx(0.30313017805064707, rel=1e-10)
    table = np.loadtxt(tmp_path / "shock_tube.csv", delimiter=",", skiprows=1)
    assert table.shape == (400, 6)
    assert np.all(np.diff(table[:, 0]) > 0.0)

    code, out, _ = run_cli(capsys, "solve-junction", config)
    assert code == 0
    junction = json.loads(out)
    for key in ("p_star", "u_star", "rho_L_star", "rho_R_star"):
        assert junction["standard_star"][key] == pytest.approx(shock["star"][key], abs=1e-9)


def test_shock_tube_needs_two_pipes(capsys):
    code, _, err = run_cli(capsys, "shock-tube", str(SCENARIOS_DIR / "stationary_three_pipes.json"))
    assert code == 7
    assert error_payload(err)["error"] == "ScenarioPhysicsError"


# ==================== verify ====================

def test_verify_without_trials(capsys):
    code, out, _ = run_cli(capsys, "verify", "--trials", "0")
    assert code == 0
    data = json.loads(out)
    assert data["passed"] is True
    assert {check["detail"] for check in data["checks"]} == {"no trials"}


def test_verify_small_run(capsys):
    code, out, _ = run_cli(capsys, "verify", "--seed", "3", "--trials", "2")
    assert code == 0
    assert json.loads(out)["seed"] == 3


def test_verify_mutated_jacobian(capsys):
    startup()
    assert cmd_verify(2016, 3, flipped_enthalpy_tau) == 1
    data = json.loads(capsys.readouterr().out)
    assert data["passed"] is False
