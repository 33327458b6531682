import math

import numpy as np
import pytest

from app.models.domain import FlowClass, GasParams, GasState
from app.models.exception import DomainError, StagnantFlowError, SupersonicStateError
from app.services.euler_core import (
    classify_flow, conservative_to_primitive, conservative_to_primitive_arrays, eigenvalues, invalid_cells,
    mach_number, physical_flux, primitive_to_conservative, primitive_to_conservative_arrays, sound_speed,
    specific_entropy, total_energy, total_enthalpy,
)


# ==================== Estados y parámetros ====================

def test_derived_quantities(air):
    state = GasState(rho=1.0, u=0.5, p=1.0)
    assert total_energy(state, air) == pytest.approx(1.0 / 0.4 + 0.125)
    assert sound_speed(state, air) == pytest.approx(math.sqrt(1.4))
    assert specific_entropy(state, air) == pytest.approx(0.0)
    assert total_enthalpy(state, air) == pytest.approx((2.5 + 0.125 + 1.0) / 1.0)
    assert state.q == 0.5


def test_entropy_uses_heat_capacity():
    state = GasState(rho=2.0, u=0.0, p=3.0)
    params = GasParams(gamma=1.3, c_v=2.5)
    assert specific_entropy(state, params) == pytest.approx(2.5 * math.log(3.0 / 2.0 ** 1.3))


@pytest.mark.parametrize("rho,p", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0), (float("nan"), 1.0)])
def test_invalid_state_rejected(rho, p):
    with pytest.raises(DomainError):
        GasState(rho=rho, u=0.0, p=p)


@pytest.mark.parametrize("gamma,c_v", [(1.0, 1.0), (0.9, 1.0), (1.4, 0.0), (1.4, -1.0)])
def test_invalid_params_rejected(gamma, c_v):
    with pytest.raises(DomainError):
        GasParams(gamma=gamma, c_v=c_v)


def test_mu2(air):
    assert air.mu2 == pytest.approx(0.4 / 2.4)


# ==================== Conversiones ====================

def test_conservative_round_trip(air, rng):
    for _ in range(50):
        state = GasState(rho=rng.uniform(0.1, 5.0), u=rng.uniform(-2.0, 2.0), p=rng.uniform(0.1, 5.0))
        back = conservative_to_primitive(*primitive_to_conservative(state, air), air)
        assert back.rho == pytest.approx(state.rho, rel=1e-14)
        assert back.u == pytest.approx(state.u, rel=1e-14, abs=1e-14)
        assert back.p == pytest.approx(state.p, rel=1e-13)


@pytest.mark.parametrize("state,conservative", [
    (GasState(rho=1.0, u=0.0, p=1.0), (1.0, 0.0, 2.5)),
    (GasState(rho=2.0, u=3.0, p=4.0), (2.0, 6.0, 19.0)),
])
def test_conversion_examples(air, state, conservative):
    assert primitive_to_conservative(state, air) == pytest.approx(conservative, rel=1e-15)
    back = conservative_to_primitive(*conservative, air)
    assert (back.rho, back.u, back.p) == pytest.approx((state.rho, state.u, state.p), rel=1e-14)


def test_entropy_invariant_under_adiabatic_scaling(air, rng):
    for _ in range(100):
        state = GasState(rho=rng.uniform(0.1, 5.0), u=rng.uniform(-1.0, 1.0), p=rng.uniform(0.1, 5.0))
        alpha = rng.uniform(0.2, 5.0)
        scaled = GasState(rho=alpha * state.rho, u=state.u, p=alpha ** air.gamma * state.p)
        assert specific_entropy(scaled, air) == pytest.approx(specific_entropy(state, air), abs=1e-12)


def test_conservative_to_primitive_rejects_negative_pressure(air):
    # energía interna negativa
    with pytest.raises(DomainError):
        conservative_to_primitive(1.0, 2.0, 1.0, air)


def test_array_conversions_match_scalar(air):
    rho = np.array([1.0, 0.5, 2.0])
    u = np.array([0.1, -0.3, 0.0])
    p = np.array([1.0, 0.2, 3.0])
    arrays = primitive_to_conservative_arrays(rho, u, p, air.gamma)
    for k in range(3):
        scalar = primitive_to_conservative(GasState(rho=rho[k], u=u[k], p=p[k]), air)
        np.testing.assert_allclose([a[k] for a in arrays], scalar, rtol=1e-15)
    back = conservative_to_primitive_arrays(*arrays, air.gamma)
    np.testing.assert_allclose(back[2], p, rtol=1e-14)


def test_invalid_cells_reports_indices():
    rho = np.array([1.0, -0.1, 1.0, 1.0])
    p = np.array([1.0, 1.0, np.nan, 1.0])
    np.testing.assert_array_equal(invalid_cells(rho, p), [1, 2])


# ==================== Flujo y autovalores ====================

def test_eigenvalues_ordered(air):
    state = GasState(rho=1.0, u=0.3, p=1.0)
    c = sound_speed(state, air)
    assert eigenvalues(state, air) == pytest.approx((0.3 - c, 0.3, 0.3 + c))


def test_physical_flux(air):
    state = GasState(rho=2.0, u=0.5, p=1.5)
    energy = total_energy(state, air)
    assert physical_flux(state, air) == pytest.approx((1.0, 2.0 * 0.25 + 1.5, 0.5 * (energy + 1.5)))


def test_eigenvalues_example(air):
    state = GasState(rho=1.4, u=10.0, p=140.0)
    c = math.sqrt(140.0)
    assert eigenvalues(state, air) == pytest.approx((10.0 - c, 10.0, 10.0 + c), rel=1e-14)


@pytest.mark.parametrize("state,flux", [
    (GasState(rho=1.0, u=0.0, p=1.0), (0.0, 1.0, 0.0)),
    (GasState(rho=2.0, u=3.0, p=4.0), (6.0, 22.0, 69.0)),
])
def test_physical_flux_examples(air, state, flux):
    assert physical_flux(state, air) == pytest.approx(flux, rel=1e-14)


def test_energy_flux_is_mass_flux_times_enthalpy(air, rng):
    for _ in range(1000):
        state = GasState(rho=rng.uniform(0.1, 5.0), u=rng.uniform(-2.0, 2.0), p=rng.uniform(0.1, 5.0))
        _, _, energy_flux = physical_flux(state, air)
        assert energy_flux == pytest.approx(state.q * total_enthalpy(state, air), rel=1e-14)


def test_mach_number(air):
    state = GasState(rho=1.0, u=-0.5, p=1.0)
    assert mach_number(state, air) == pytest.approx(0.5 / math.sqrt(1.4))


# ==================== Clasificación ====================

def test_classify_flow(air):
    assert classify_flow(GasState(rho=1.0, u=0.2, p=1.0), air) is FlowClass.OUTGOING
    assert classify_flow(GasState(rho=1.0, u=-0.2, p=1.0), air) is FlowClass.INCOMING


def test_classify_stagnant_raises(air):
    with pytest.raises(StagnantFlowError):
        classify_flow(GasState(rho=1.0, u=0.0, p=1.0), air)


@pytest.mark.parametrize("u", [2.0, -2.0, math.sqrt(1.4)])
def test_classify_supersonic_raises(air, u):
    with pytest.raises(SupersonicStateError):
        classify_flow(GasState(rho=1.0, u=u, p=1.0), air)
