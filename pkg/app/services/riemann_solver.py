"""
Solver exacto del problema de Riemann estándar para el gas politrópico.

Contiene las parametrizaciones ψ/φ de las ondas 1 y 3, sus derivadas, las
curvas de Lax L1/L2/L3, la resolución vectorizada de la presión estrella
(Newton amortiguado con respaldo de bisección) y el muestreo del abanico
autosemejante.
"""
from typing import NamedTuple, Tuple

import numpy as np

from app.core.config import settings
from app.models.domain import GasParams, GasState, StarState, Wave, WaveFan, WaveKind
from app.models.exception import DomainError, NoConvergenceError, VacuumError
from app.services.euler_core import sound_speed_kernel
from app.services.logger import get_logger

logger = get_logger(__name__)


class StarArrays(NamedTuple):
    p_star: np.ndarray
    u_star: np.ndarray
    rho_L_star: np.ndarray
    rho_R_star: np.ndarray
    iterations: int


# ==================== Parametrizaciones ψ, φ ====================

def psi_kernel(p_star, rho, p, gamma):
    """Incremento de velocidad a través de una onda 1 o 3 (rarefacción si p* <= p_k)."""
    p_star = np.asarray(p_star, dtype=float)
    mu2 = (gamma - 1.0) / (gamma + 1.0)
    c = sound_speed_kernel(rho, p, gamma)
    rarefaction = (2.0 * c / (gamma - 1.0)) * ((p_star / p) ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
    shock = (p_star - p) * np.sqrt((1.0 - mu2) / (rho * (p_star + mu2 * p)))
    return np.where(p_star <= p, rarefaction, shock)


def psi_prime_kernel(p_star, rho, p, gamma):
    p_star = np.asarray(p_star, dtype=float)
    mu2 = (gamma - 1.0) / (gamma + 1.0)
    c = sound_speed_kernel(rho, p, gamma)
    rarefaction = c / (gamma * p) * (p_star / p) ** (-(gamma + 1.0) / (2.0 * gamma))
    root = np.sqrt((1.0 - mu2) / (rho * (p_star + mu2 * p)))
    shock = root * (1.0 - (p_star - p) / (2.0 * (p_star + mu2 * p)))
    return np.where(p_star <= p, rarefaction, shock)


def phi_kernel(p_star, rho, p, gamma):
    """Densidad detrás de una onda 1 o 3."""
    p_star = np.asarray(p_star, dtype=float)
    mu2 = (gamma - 1.0) / (gamma + 1.0)
    rarefaction = rho * (p_star / p) ** (1.0 / gamma)
    shock = rho * (p_star + mu2 * p) / (mu2 * p_star + p)
    return np.where(p_star <= p, rarefaction, shock)


def phi_prime_kernel(p_star, rho, p, gamma):
    p_star = np.asarray(p_star, dtype=float)
    mu2 = (gamma - 1.0) / (gamma + 1.0)
    rarefaction = rho / (gamma * p) * (p_star / p) ** (1.0 / gamma - 1.0)
    shock = rho * p * (1.0 - mu2 * mu2) / (mu2 * p_star + p) ** 2
    return np.where(p_star <= p, rarefaction, shock)


def _check_pressure(p_star: float):
    if not p_star > 0.0 or not np.isfinite(p_star):
        raise DomainError(f"La presión del parámetro debe ser positiva (p*={p_star})")


def psi(p_star: float, state: GasState, params: GasParams) -> float:
    """
    ψ(p*, U_k): salto de velocidad entre U_k y la región estrella.

    Raises:
        DomainError: Si p* <= 0
    """
    _check_pressure(p_star)
    return float(psi_kernel(p_star, state.rho, state.p, params.gamma))


def psi_prime(p_star: float, state: GasState, params: GasParams) -> float:
    _check_pressure(p_star)
    return float(psi_prime_kernel(p_star, state.rho, state.p, params.gamma))


def phi(p_star: float, state: GasState, params: GasParams) -> float:
    """
    φ(p*, U_k): densidad de la región estrella del lado k.

    Raises:
        DomainError: Si p* <= 0
    """
    _check_pressure(p_star)
    return float(phi_kernel(p_star, state.rho, state.p, params.gamma))


def phi_prime(p_star: float, state: GasState, params: GasParams) -> float:
    _check_pressure(p_star)
    return float(phi_prime_kernel(p_star, state.rho, state.p, params.gamma))


# ==================== Curvas de Lax ====================

def lax1(sigma: float, left: GasState, params: GasParams) -> GasState:
    """Curva 1 de Lax por U_L: (φ(σ,U_L), u_L - ψ(σ,U_L), σ)."""
    _check_pressure(sigma)
    return GasState(rho=phi(sigma, left, params), u=left.u - psi(sigma, left, params), p=sigma)


def lax3(sigma: float, right: GasState, params: GasParams) -> GasState:
    """Curva 3 de Lax por U_R: (φ(σ,U_R), u_R + ψ(σ,U_R), σ)."""
    _check_pressure(sigma)
    return GasState(rho=phi(sigma, right, params), u=right.u + psi(sigma, right, params), p=sigma)


def lax2(tau: float, base: GasState, params: GasParams) -> GasState:
    """
    Curva 2 (discontinuidad de contacto): Ū + τ(1, ū, ū²/2).

    Raises:
        DomainError: Si ρ + τ <= 0
    """
    rho = base.rho + tau
    if not rho > 0.0:
        raise DomainError(f"Desplazamiento de contacto inválido: rho + tau = {rho}")
    return GasState(rho=rho, u=base.u, p=base.p)


# ==================== Presión estrella ====================

def _star_function(p, rhoL, pL, rhoR, pR, du, gamma):
    return psi_kernel(p, rhoL, pL, gamma) + psi_kernel(p, rhoR, pR, gamma) + du


def _bisect_star(rhoL, pL, rhoR, pR, du, gamma):
    lo = np.zeros_like(pL)
    hi = np.maximum(pL, pR)
    for _ in range(200):
        low_side = _star_function(hi, rhoL, pL, rhoR, pR, du, gamma) < 0.0
        if not low_side.any():
            break
        hi = np.where(low_side, 2.0 * hi, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = _star_function(mid, rhoL, pL, rhoR, pR, du, gamma) < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _polish_star(p, g, rhoL, pL, rhoR, pR, du, gamma):
    """Un paso de Newton adicional, aceptado elemento a elemento si reduce |g|."""
    active = (g != 0.0) & np.isfinite(g)
    if not active.any():
        return p, g
    dg = psi_prime_kernel(p, rhoL, pL, gamma) + psi_prime_kernel(p, rhoR, pR, gamma)
    candidate = np.where(active, p - g / np.where(active, dg, 1.0), p)
    candidate = np.where(candidate > 0.0, candidate, p)
    g_new = _star_function(candidate, rhoL, pL, rhoR, pR, du, gamma)
    better = active & (np.abs(g_new) < np.abs(g))
    return np.where(better, candidate, p), np.where(better, g_new, g)


def solve_star_arrays(rhoL, uL, pL, rhoR, uR, pR, gamma: float,
                      tol: float = None, max_iter: int = None) -> StarArrays:
    """
    Resuelve la región estrella para un arreglo de pares (U_L, U_R).

    Newton amortiguado que preserva la positividad desde p0 = (p_L+p_R)/2; los
    elementos que no convergen dentro del límite se resuelven por bisección.

    Raises:
        VacuumError: Si algún par viola u_R - u_L < 2(c_L+c_R)/(γ-1)
        NoConvergenceError: Si ni Newton ni la bisección alcanzan la tolerancia
    """
    tol = settings.RIEMANN_TOL if tol is None else tol
    max_iter = settings.RIEMANN_MAX_ITER if max_iter is None else max_iter
    rhoL, uL, pL, rhoR, uR, pR = (np.asarray(v, dtype=float) for v in (rhoL, uL, pL, rhoR, uR, pR))

    cL = sound_speed_kernel(rhoL, pL, gamma)
    cR = sound_speed_kernel(rhoR, pR, gamma)
    du = uR - uL
    vacuum = du >= 2.0 * (cL + cR) / (gamma - 1.0)
    if np.any(vacuum):
        raise VacuumError(f"{int(np.count_nonzero(vacuum))} par(es) generan vacío")

    scale = np.maximum.reduce([np.ones_like(uL), np.abs(uL), np.abs(uR), cL, cR])
    p = np.maximum(np.finfo(float).tiny, 0.5 * (pL + pR))
    iterations = 0
    converged = np.zeros(p.shape, dtype=bool)
    for iterations in range(max_iter + 1):
        g = _star_function(p, rhoL, pL, rhoR, pR, du, gamma)
        converged = np.abs(g) <= tol * scale
        if converged.all():
            break
        if iterations == max_iter:
            break
        dg = psi_prime_kernel(p, rhoL, pL, gamma) + psi_prime_kernel(p, rhoR, pR, gamma)
        step = np.where(converged, 0.0, g / dg)
        candidate = p - step
        p = np.where(candidate > 0.0, candidate, 0.1 * p)

    if not converged.all():
        logger.warning(f"Newton de presión estrella sin converger en {int(np.count_nonzero(~converged))} par(es); usando bisección")
        p = np.where(converged, p, _bisect_star(rhoL, pL, rhoR, pR, du, gamma))
        g = _star_function(p, rhoL, pL, rhoR, pR, du, gamma)

    p, g = _polish_star(p, g, rhoL, pL, rhoR, pR, du, gamma)
    residual = np.abs(g) / scale
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0) or np.any(residual > tol):
        raise NoConvergenceError(
            f"La presión estrella no pudo determinarse (residuo {float(np.nanmax(residual)):.3e})",
            iterations, float(np.nanmax(residual)),
        )

    psiL = psi_kernel(p, rhoL, pL, gamma)
    psiR = psi_kernel(p, rhoR, pR, gamma)
    u_star = 0.5 * (uL + uR) + 0.5 * (psiR - psiL)
    rho_L_star = phi_kernel(p, rhoL, pL, gamma)
    rho_R_star = phi_kernel(p, rhoR, pR, gamma)
    return StarArrays(p, u_star, rho_L_star, rho_R_star, iterations)


def solve_star(left: GasState, right: GasState, params: GasParams) -> StarState:
    """
    Resuelve la región estrella del problema de Riemann estándar.

    Args:
        left: Estado izquierdo U_L
        right: Estado derecho U_R
        params: Parámetros del gas

    Returns:
        StarState: (p*, u*, ρ_L*, ρ_R*)

    Raises:
        VacuumError: Si los datos generan vacío
        NoConvergenceError: Si el método iterativo falla
    """
    star = solve_star_arrays(left.rho, left.u, left.p, right.rho, right.u, right.p, params.gamma)
    result = StarState(
        p_star=float(star.p_star),
        u_star=float(star.u_star),
        rho_L_star=float(star.rho_L_star),
        rho_R_star=float(star.rho_R_star),
        iterations=star.iterations,
    )
    logger.debug(f"solve_star: p*={result.p_star:.12g}, u*={result.u_star:.12g}, iteraciones={result.iterations}")
    return result


# ==================== Abanico de ondas ====================

def _shock_speed_factor(p_star, p, gamma):
    return np.sqrt((gamma + 1.0) / (2.0 * gamma) * p_star / p + (gamma - 1.0) / (2.0 * gamma))


def wave_speeds_arrays(star: StarArrays, rhoL, uL, pL, rhoR, uR, pR, gamma):
    """Velocidades (head, tail) de las ondas 1 y 3; para choques head = tail."""
    p_star, u_star = star.p_star, star.u_star
    cL = sound_speed_kernel(rhoL, pL, gamma)
    cR = sound_speed_kernel(rhoR, pR, gamma)
    left_shock = p_star > pL
    right_shock = p_star > pR
    sL = uL - cL * _shock_speed_factor(p_star, pL, gamma)
    sR = uR + cR * _shock_speed_factor(p_star, pR, gamma)
    cL_star = cL * (p_star / pL) ** ((gamma - 1.0) / (2.0 * gamma))
    cR_star = cR * (p_star / pR) ** ((gamma - 1.0) / (2.0 * gamma))
    left_head = np.where(left_shock, sL, uL - cL)
    left_tail = np.where(left_shock, sL, u_star - cL_star)
    right_head = np.where(right_shock, sR, uR + cR)
    right_tail = np.where(right_shock, sR, u_star + cR_star)
    return left_shock, left_head, left_tail, right_shock, right_head, right_tail


def sample_arrays(star: StarArrays, rhoL, uL, pL, rhoR, uR, pR, gamma: float, xi=0.0):
    """
    Valor de la solución autosemejante en x/t = xi para cada par.

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (ρ, u, p)
    """
    rhoL, uL, pL, rhoR, uR, pR = (np.asarray(v, dtype=float) for v in (rhoL, uL, pL, rhoR, uR, pR))
    xi = np.asarray(xi, dtype=float)
    p_star, u_star = star.p_star, star.u_star
    cL = sound_speed_kernel(rhoL, pL, gamma)
    cR = sound_speed_kernel(rhoR, pR, gamma)
    left_shock, left_head, left_tail, right_shock, right_head, right_tail = wave_speeds_arrays(
        star, rhoL, uL, pL, rhoR, uR, pR, gamma)

    g1 = 2.0 / (gamma + 1.0)
    g2 = (gamma - 1.0) / (gamma + 1.0)
    g3 = (gamma - 1.0) / 2.0

    # Abanicos de rarefacción (solución isentrópica estándar)
    base_L = g1 + g2 / cL * (uL - xi)
    fan_L_rho = rhoL * np.abs(base_L) ** (2.0 / (gamma - 1.0))
    fan_L_u = g1 * (cL + g3 * uL + xi)
    fan_L_p = pL * np.abs(base_L) ** (2.0 * gamma / (gamma - 1.0))
    base_R = g1 - g2 / cR * (uR - xi)
    fan_R_rho = rhoR * np.abs(base_R) ** (2.0 / (gamma - 1.0))
    fan_R_u = g1 * (-cR + g3 * uR + xi)
    fan_R_p = pR * np.abs(base_R) ** (2.0 * gamma / (gamma - 1.0))

    # Lado izquierdo del contacto
    in_left_data = xi <= left_head
    in_left_star = np.where(left_shock, xi > left_head, xi >= left_tail)
    rho_left = np.where(in_left_data, rhoL, np.where(in_left_star, star.rho_L_star, fan_L_rho))
    u_left = np.where(in_left_data, uL, np.where(in_left_star, u_star, fan_L_u))
    p_left = np.where(in_left_data, pL, np.where(in_left_star, p_star, fan_L_p))

    # Lado derecho del contacto
    in_right_data = xi >= right_head
    in_right_star = np.where(right_shock, xi < right_head, xi <= right_tail)
    rho_right = np.where(in_right_data, rhoR, np.where(in_right_star, star.rho_R_star, fan_R_rho))
    u_right = np.where(in_right_data, uR, np.where(in_right_star, u_star, fan_R_u))
    p_right = np.where(in_right_data, pR, np.where(in_right_star, p_star, fan_R_p))

    left_of_contact = xi <= u_star
    return (
        np.where(left_of_contact, rho_left, rho_right),
        np.where(left_of_contact, u_left, u_right),
        np.where(left_of_contact, p_left, p_right),
    )


def solve_riemann(left: GasState, right: GasState, params: GasParams) -> WaveFan:
    """
    Construye el abanico completo (estado estrella, tipos de onda y velocidades).

    Args:
        left: Estado izquierdo
        right: Estado derecho
        params: Parámetros del gas

    Returns:
        WaveFan: Abanico con las tres ondas ordenadas de izquierda a derecha
    """
    gamma = params.gamma
    star = solve_star_arrays(left.rho, left.u, left.p, right.rho, right.u, right.p, gamma)
    left_shock, left_head, left_tail, right_shock, right_head, right_tail = wave_speeds_arrays(
        star, left.rho, left.u, left.p, right.rho, right.u, right.p, gamma)
    waves = (
        Wave(family=1, kind=WaveKind.SHOCK if bool(left_shock) else WaveKind.RAREFACTION,
             head_speed=float(left_head), tail_speed=float(left_tail)),
        Wave(family=2, kind=WaveKind.CONTACT, head_speed=float(star.u_star), tail_speed=float(star.u_star)),
        Wave(family=3, kind=WaveKind.SHOCK if bool(right_shock) else WaveKind.RAREFACTION,
             head_speed=float(right_head), tail_speed=float(right_tail)),
    )
    star_state = StarState(
        p_star=float(star.p_star), u_star=float(star.u_star),
        rho_L_star=float(star.rho_L_star), rho_R_star=float(star.rho_R_star),
        iterations=star.iterations,
    )
    return WaveFan(left=left, right=right, star=star_state, waves=waves, params=params)


def sample_wave_fan(fan: WaveFan, xi: float, params: GasParams = None) -> GasState:
    """
    Evalúa la solución autosemejante del abanico en x/t = xi.

    Args:
        fan: Abanico producido por `solve_riemann`
        xi: Coordenada de autosemejanza x/t
        params: Parámetros del gas (por defecto los del abanico)

    Returns:
        GasState: Estado en xi
    """
    gamma = (params or fan.params).gamma
    star = StarArrays(
        np.asarray(fan.star.p_star), np.asarray(fan.star.u_star),
        np.asarray(fan.star.rho_L_star), np.asarray(fan.star.rho_R_star), fan.star.iterations,
    )
    rho, u, p = sample_arrays(star, fan.left.rho, fan.left.u, fan.left.p,
                              fan.right.rho, fan.right.u, fan.right.p, gamma, xi)
    return GasState(rho=float(rho), u=float(u), p=float(p))


def sample_profile(fan: WaveFan, x: np.ndarray, time: float, x0: float = 0.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Muestrea el abanico en las posiciones x en el instante `time` (discontinuidad inicial en x0)."""
    x = np.asarray(x, dtype=float)
    xi = (x - x0) / time
    star = StarArrays(
        np.full_like(x, fan.star.p_star), np.full_like(x, fan.star.u_star),
        np.full_like(x, fan.star.rho_L_star), np.full_like(x, fan.star.rho_R_star), fan.star.iterations,
    )
    ones = np.ones_like(x)
    return sample_arrays(star, fan.left.rho * ones, fan.left.u * ones, fan.left.p * ones,
                         fan.right.rho * ones, fan.right.u * ones, fan.right.p * ones,
                         fan.params.gamma, xi)
