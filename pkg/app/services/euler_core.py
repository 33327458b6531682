"""
Núcleo termodinámico del sistema de Euler politrópico.

Las funciones `*_arrays` (y los kernels sin prefijo) aceptan escalares o arreglos
de numpy indistintamente; las operaciones públicas sobre `GasState` validan el
estado y devuelven valores escalares.
"""
from typing import Tuple

import numpy as np

from app.models.domain import FlowClass, GasParams, GasState
from app.models.exception import DomainError, StagnantFlowError, SupersonicStateError
from app.services.logger import get_logger

logger = get_logger(__name__)


# ==================== Kernels (escalares o arreglos) ====================

def total_energy_kernel(rho, u, p, gamma):
    return p / (gamma - 1.0) + 0.5 * rho * u * u


def sound_speed_kernel(rho, p, gamma):
    return np.sqrt(gamma * p / rho)


def entropy_kernel(rho, p, gamma, c_v):
    return c_v * np.log(p / rho ** gamma)


def enthalpy_kernel(rho, u, p, gamma):
    return (total_energy_kernel(rho, u, p, gamma) + p) / rho


def flux_kernel(rho, u, p, gamma):
    """Flujo físico F = (ρu, ρu²+p, u(E+p))."""
    energy = total_energy_kernel(rho, u, p, gamma)
    return rho * u, rho * u * u + p, u * (energy + p)


def primitive_to_conservative_arrays(rho, u, p, gamma):
    return rho, rho * u, total_energy_kernel(rho, u, p, gamma)


def conservative_to_primitive_arrays(rho, q, energy, gamma):
    """Inversa algebraica; no valida (ver `invalid_cells`)."""
    u = q / rho
    p = (gamma - 1.0) * (energy - 0.5 * q * u)
    return rho, u, p


def invalid_cells(rho, p) -> np.ndarray:
    """Índices de celdas con densidad o presión no positiva (o no finita)."""
    bad = ~(np.isfinite(rho) & np.isfinite(p) & (rho > 0.0) & (p > 0.0))
    return np.flatnonzero(bad)


# ==================== Operaciones sobre GasState ====================

def total_energy(state: GasState, params: GasParams) -> float:
    return float(total_energy_kernel(state.rho, state.u, state.p, params.gamma))


def sound_speed(state: GasState, params: GasParams) -> float:
    return float(sound_speed_kernel(state.rho, state.p, params.gamma))


def specific_entropy(state: GasState, params: GasParams) -> float:
    """s = c_v ln(p / ρ^γ)."""
    return float(entropy_kernel(state.rho, state.p, params.gamma, params.c_v))


def total_enthalpy(state: GasState, params: GasParams) -> float:
    """h = (E + p) / ρ."""
    return float(enthalpy_kernel(state.rho, state.u, state.p, params.gamma))


def primitive_to_conservative(state: GasState, params: GasParams) -> Tuple[float, float, float]:
    """
    Convierte (ρ, u, p) en (ρ, q, E).

    Args:
        state: Estado primitivo válido
        params: Parámetros del gas

    Returns:
        Tuple[float, float, float]: (ρ, ρu, p/(γ-1) + ρu²/2)
    """
    rho, q, energy = primitive_to_conservative_arrays(state.rho, state.u, state.p, params.gamma)
    return float(rho), float(q), float(energy)


def conservative_to_primitive(rho: float, q: float, energy: float, params: GasParams) -> GasState:
    """
    Convierte (ρ, q, E) en un GasState.

    Raises:
        DomainError: Si ρ <= 0 o la presión recuperada es no positiva (vacío o celda inválida)
    """
    if not rho > 0.0:
        raise DomainError(f"Densidad no positiva en variables conservativas: rho={rho}")
    rho, u, p = conservative_to_primitive_arrays(rho, q, energy, params.gamma)
    if not p > 0.0:
        raise DomainError(f"Presión recuperada no positiva: p={p} (rho={rho}, q={q}, E={energy})")
    return GasState(rho=float(rho), u=float(u), p=float(p))


def eigenvalues(state: GasState, params: GasParams) -> Tuple[float, float, float]:
    """Autovalores característicos (u-c, u, u+c)."""
    c = sound_speed(state, params)
    return state.u - c, state.u, state.u + c


def physical_flux(state: GasState, params: GasParams) -> Tuple[float, float, float]:
    """Flujo físico F(U) del sistema de Euler."""
    f1, f2, f3 = flux_kernel(state.rho, state.u, state.p, params.gamma)
    return float(f1), float(f2), float(f3)


def mach_number(state: GasState, params: GasParams) -> float:
    return abs(state.u) / sound_speed(state, params)


def classify_flow(state: GasState, params: GasParams) -> FlowClass:
    """
    Clasifica un estado subsónico como saliente (D+) o entrante (D-).

    Args:
        state: Estado de la traza
        params: Parámetros del gas

    Returns:
        FlowClass: OUTGOING si u > 0, INCOMING si u < 0

    Raises:
        SupersonicStateError: Si |u| >= c
        StagnantFlowError: Si u = 0 exactamente
    """
    c = sound_speed(state, params)
    if abs(state.u) >= c:
        raise SupersonicStateError(f"Estado no subsónico: |u|={abs(state.u):.6g} >= c={c:.6g}")
    if state.u == 0.0:
        raise StagnantFlowError()
    return FlowClass.OUTGOING if state.u > 0.0 else FlowClass.INCOMING
