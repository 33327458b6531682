"""
Problema de Riemann generalizado en la unión de N tuberías.

Construye el residuo Φ(σ, τ) de las condiciones de acoplamiento, su jacobiano
analítico y lo resuelve con Newton amortiguado. Convenciones:

- El orden canónico coloca primero las tuberías salientes (i = 0..N_o-1), luego
  la tubería entrante de mayor entropía (índice de referencia N_o) y por último
  las demás entrantes. `solve_junction` aplica la permutación y la deshace.
- `coupling_residual` y `coupling_jacobian` trabajan en el orden del problema
  recibido; exigen que las salientes vayan primero y usan el índice N_o como
  referencia.
"""
import time
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from app.core.config import settings
from app.models.domain import (
    ConservationDiagnostics, CouplingMode, CouplingParams, FlowClass, GasParams, GasState,
    JunctionProblem, LipschitzStats, PipeSpec, StarSolution, StarState,
)
from app.models.exception import (
    AppBaseException, DegenerateInflowError, DomainError, FlowClassificationError,
    FlowReversalError, InvalidJunctionError, NoConvergenceError, StagnantFlowError, SupersonicStateError,
)
from app.services.euler_core import (
    enthalpy_kernel, entropy_kernel, primitive_to_conservative, sound_speed, specific_entropy,
    total_enthalpy,
)
from app.services.logger import get_logger, log_exception, log_solver_summary
from app.services.riemann_solver import (
    lax2, lax3, phi, phi_prime_kernel, psi_prime_kernel, solve_star,
)

logger = get_logger(__name__)


class TraceDerivatives(NamedTuple):
    """Magnitudes de la traza estrella de una tubería y sus derivadas respecto de (σ, τ)."""
    rho: float
    u: float
    p: float
    q: float
    h: float
    s: float
    dyn: float
    q_sigma: float
    q_tau: float
    h_sigma: float
    h_tau: float
    s_sigma: float
    s_tau: float
    dyn_sigma: float
    dyn_tau: float


# ==================== Magnitudes de la traza estrella ====================

def star_trace_state(sigma: float, tau: Optional[float], base: GasState, params: GasParams) -> GasState:
    """Y* = L3(σ, Ū) para entrantes, L2(τ, L3(σ, Ū)) para salientes (τ presente)."""
    state = lax3(sigma, base, params)
    if tau is None:
        return state
    return lax2(tau, state, params)


def star_trace_quantities(sigma: float, tau: Optional[float], base: GasState,
                          params: GasParams) -> Tuple[float, float, float]:
    """
    Flujo másico, entalpía total y entropía de la región L* de una tubería.

    Args:
        sigma: Parámetro de la curva 3 (presión)
        tau: Desplazamiento de densidad del contacto (solo tuberías salientes)
        base: Traza constante Ū de la tubería
        params: Parámetros del gas

    Returns:
        Tuple[float, float, float]: (q, h, s)

    Raises:
        DomainError: Si los parámetros salen del dominio de las curvas de Lax
    """
    state = star_trace_state(sigma, tau, base, params)
    return state.q, total_enthalpy(state, params), specific_entropy(state, params)


def star_trace_derivatives(sigma: float, tau: Optional[float], base: GasState,
                           params: GasParams) -> TraceDerivatives:
    """
    Magnitudes de la traza estrella y sus derivadas analíticas.

    Con ρ = φ(σ) + τ, u = ū + ψ(σ), p = σ se derivan q = ρu, h = γp/((γ-1)ρ) + u²/2,
    s = c_v(ln p - γ ln ρ) y la presión dinámica ρu² + p. Para entrantes τ = 0 y
    las derivadas en τ se devuelven igualmente (no se usan).
    """
    state = star_trace_state(sigma, tau, base, params)
    gamma, c_v = params.gamma, params.c_v
    dphi = float(phi_prime_kernel(sigma, base.rho, base.p, gamma))
    dpsi = float(psi_prime_kernel(sigma, base.rho, base.p, gamma))
    rho, u, p = state.rho, state.u, state.p
    g1 = gamma / (gamma - 1.0)
    return TraceDerivatives(
        rho=rho, u=u, p=p,
        q=rho * u,
        h=float(enthalpy_kernel(rho, u, p, gamma)),
        s=float(entropy_kernel(rho, p, gamma, c_v)),
        dyn=rho * u * u + p,
        q_sigma=dphi * u + rho * dpsi,
        q_tau=u,
        h_sigma=g1 * (1.0 / rho - p * dphi / (rho * rho)) + u * dpsi,
        h_tau=-g1 * p / (rho * rho),
        s_sigma=c_v * (1.0 / p - gamma * dphi / rho),
        s_tau=-gamma * c_v / rho,
        dyn_sigma=dphi * u * u + 2.0 * rho * u * dpsi + 1.0,
        dyn_tau=u * u,
    )


# ==================== Mezcla de entropía ====================

def inflow_threshold(problem: JunctionProblem) -> float:
    """Umbral de flujo entrante neto degenerado: rtol·max‖ν‖ρc sobre las trazas."""
    return settings.DEGENERATE_INFLOW_RTOL * _mass_scale(problem)


def weighted_entropy(nu: Sequence[float], q: Sequence[float], s: Sequence[float], threshold: float = 0.0) -> float:
    """
    s* = Σ‖ν‖q s / Σ‖ν‖q.

    Raises:
        DegenerateInflowError: Si |Σ‖ν‖q| <= threshold
    """
    nu, q, s = (np.asarray(v, dtype=float) for v in (nu, q, s))
    flux = nu * q
    total = float(np.sum(flux))
    if not abs(total) > threshold:
        raise DegenerateInflowError(f"Flujo másico entrante neto {total:.3e} por debajo del umbral {threshold:.3e}")
    return float(np.sum(flux * s)) / total


def entropy_mix(sigma_incoming: Sequence[float], problem: JunctionProblem) -> float:
    """
    Mezcla de entropía s* de las tuberías entrantes.

    Args:
        sigma_incoming: Presiones σ_j de las tuberías entrantes, en el orden del problema
        problem: Problema de la unión

    Returns:
        float: s*

    Raises:
        DegenerateInflowError: Si el flujo entrante neto es (casi) nulo
    """
    incoming = [k for k, cls in enumerate(problem.classes) if cls is FlowClass.INCOMING]
    if len(sigma_incoming) != len(incoming):
        raise InvalidJunctionError(f"Se esperaban {len(incoming)} presiones entrantes, se recibieron {len(sigma_incoming)}")
    nu, q, s = [], [], []
    for sigma, k in zip(sigma_incoming, incoming):
        pipe = problem.pipes[k]
        q_k, _, s_k = star_trace_quantities(sigma, None, problem.traces[k], pipe.params)
        nu.append(pipe.nu_norm)
        q.append(q_k)
        s.append(s_k)
    return weighted_entropy(nu, q, s, inflow_threshold(problem))


# ==================== Residuo y jacobiano ====================

def _check_outgoing_first(problem: JunctionProblem):
    n_out = problem.n_outgoing
    if any(cls is not FlowClass.OUTGOING for cls in problem.classes[:n_out]):
        raise InvalidJunctionError("Las tuberías salientes deben ocupar las primeras posiciones")


def _evaluate(params: CouplingParams, problem: JunctionProblem) -> List[TraceDerivatives]:
    n_out = problem.n_outgoing
    if len(params.sigma) != problem.n_pipes or len(params.tau) != n_out:
        raise InvalidJunctionError(
            f"Dimensión de parámetros inválida: |σ|={len(params.sigma)}, |τ|={len(params.tau)} "
            f"(N={problem.n_pipes}, N_o={n_out})"
        )
    values = []
    for k, (pipe, trace) in enumerate(zip(problem.pipes, problem.traces)):
        tau = params.tau[k] if k < n_out else None
        values.append(star_trace_derivatives(params.sigma[k], tau, trace, pipe.params))
    return values


def _other_rows(n: int, ref: int) -> List[int]:
    return [k for k in range(n) if k != ref]


def _residual_from_values(values: List[TraceDerivatives], problem: JunctionProblem) -> np.ndarray:
    n, n_out = problem.n_pipes, problem.n_outgoing
    ref = n_out
    nu = np.array([pipe.nu_norm for pipe in problem.pipes])
    q = np.array([v.q for v in values])
    residual = np.zeros(problem.dimension)
    residual[0] = float(np.sum(nu * q))

    if problem.mode is CouplingMode.ENTROPY_MIX:
        for row, k in enumerate(_other_rows(n, ref), start=1):
            residual[row] = values[ref].h - values[k].h
        incoming = range(n_out, n)
        s_star = weighted_entropy(nu[n_out:], q[n_out:], [values[j].s for j in incoming], inflow_threshold(problem))
        for i in range(n_out):
            residual[n + i] = values[i].s - s_star
        return residual

    h = np.array([v.h for v in values])
    residual[1] = float(np.sum(nu * q * h))
    pressure = [v.p if problem.mode is CouplingMode.PRESSURE_EQUAL else v.dyn for v in values]
    for row, k in enumerate(_other_rows(n, ref), start=2):
        residual[row] = pressure[ref] - pressure[k]
    return residual


def _jacobian_from_values(values: List[TraceDerivatives], problem: JunctionProblem) -> np.ndarray:
    n, n_out = problem.n_pipes, problem.n_outgoing
    ref = n_out
    nu = [pipe.nu_norm for pipe in problem.pipes]
    jac = np.zeros((problem.dimension, problem.dimension))

    for k, v in enumerate(values):
        jac[0, k] = nu[k] * v.q_sigma
    for i in range(n_out):
        jac[0, n + i] = nu[i] * values[i].q_tau

    if problem.mode is CouplingMode.ENTROPY_MIX:
        for row, k in enumerate(_other_rows(n, ref), start=1):
            jac[row, ref] += values[ref].h_sigma
            jac[row, k] -= values[k].h_sigma
            if k < n_out:
                jac[row, n + k] = -values[k].h_tau

        flux = sum(nu[j] * values[j].q for j in range(n_out, n))
        s_star = sum(nu[j] * values[j].q * values[j].s for j in range(n_out, n)) / flux
        ds_star = {
            j: nu[j] * (values[j].q_sigma * (values[j].s - s_star) + values[j].q * values[j].s_sigma) / flux
            for j in range(n_out, n)
        }
        for i in range(n_out):
            jac[n + i, i] = values[i].s_sigma
            jac[n + i, n + i] = values[i].s_tau
            for j, derivative in ds_star.items():
                jac[n + i, j] -= derivative
        return jac

    for k, v in enumerate(values):
        jac[1, k] = nu[k] * (v.q_sigma * v.h + v.q * v.h_sigma)
    for i in range(n_out):
        v = values[i]
        jac[1, n + i] = nu[i] * (v.q_tau * v.h + v.q * v.h_tau)
    dynamic = problem.mode is CouplingMode.DYNAMIC_PRESSURE_EQUAL
    for row, k in enumerate(_other_rows(n, ref), start=2):
        jac[row, ref] += values[ref].dyn_sigma if dynamic else 1.0
        jac[row, k] -= values[k].dyn_sigma if dynamic else 1.0
        if dynamic and k < n_out:
            jac[row, n + k] = -values[k].dyn_tau
    return jac


def coupling_residual(params: CouplingParams, problem: JunctionProblem) -> np.ndarray:
    """
    Residuo Φ(σ, τ) ∈ R^(N+N_o).

    EntropyMix: [Σ‖ν‖q; h_ref - h_k (k ≠ ref); s_i - s* (i saliente)].
    Modos de presión (N_o = 1): [Σ‖ν‖q; Σ‖ν‖qh; P_ref - P_k (k ≠ ref)] con P = p o ρu²+p.

    Raises:
        InvalidJunctionError: Si las tuberías salientes no van primero
        DomainError: Si los parámetros salen del dominio de las curvas de Lax
        DegenerateInflowError: Si s* no está definido
    """
    _check_outgoing_first(problem)
    return _residual_from_values(_evaluate(params, problem), problem)


def coupling_jacobian(params: CouplingParams, problem: JunctionProblem) -> np.ndarray:
    """
    Jacobiano analítico de Φ respecto de (σ, τ).

    ψ y φ son C² en σ = p_k, por lo que la derivación analítica de la
    composición de curvas vale en todo el dominio.
    """
    _check_outgoing_first(problem)
    return _jacobian_from_values(_evaluate(params, problem), problem)


def base_params(problem: JunctionProblem) -> CouplingParams:
    """Punto base (σ0, τ0) = (presiones de las trazas, 0)."""
    return CouplingParams(sigma=tuple(t.p for t in problem.traces), tau=(0.0,) * problem.n_outgoing)


def d_matrices(problem: JunctionProblem, params: Optional[CouplingParams] = None) -> List[np.ndarray]:
    """
    Submatrices D_i (3x3) del jacobiano para cada tubería saliente i.

    Filas: masa, entalpía de la tubería i, entropía de la tubería i.
    Columnas: σ_i, σ_ref, τ_i.
    """
    if problem.mode is not CouplingMode.ENTROPY_MIX:
        raise InvalidJunctionError("Las matrices D_i solo están definidas en el modo entropy_mix")
    params = params or base_params(problem)
    jac = coupling_jacobian(params, problem)
    n, ref = problem.n_pipes, problem.n_outgoing
    matrices = []
    for i in range(problem.n_outgoing):
        h_row = 1 + i
        s_row = n + i
        matrices.append(np.array([
            [jac[0, i], jac[0, ref], jac[0, n + i]],
            [jac[h_row, i], jac[h_row, ref], jac[h_row, n + i]],
            [jac[s_row, i], jac[s_row, ref], jac[s_row, n + i]],
        ]))
    return matrices


# ==================== Escalas ====================

def _mass_scale(problem: JunctionProblem) -> float:
    return max(pipe.nu_norm * trace.rho * sound_speed(trace, pipe.params)
               for pipe, trace in zip(problem.pipes, problem.traces))


def row_scales(problem: JunctionProblem) -> np.ndarray:
    """Escalas por fila para el residuo adimensional."""
    n = problem.n_pipes
    mass = _mass_scale(problem)
    c2 = max(sound_speed(t, pipe.params) ** 2 for pipe, t in zip(problem.pipes, problem.traces))
    scales = np.empty(problem.dimension)
    scales[0] = mass
    if problem.mode is CouplingMode.ENTROPY_MIX:
        scales[1:n] = c2
        scales[n:] = max(pipe.params.c_v for pipe in problem.pipes)
    else:
        scales[1] = mass * c2
        scales[2:] = max(t.p for t in problem.traces)
    return scales


# ==================== Orden canónico ====================

def canonical_order(problem: JunctionProblem) -> List[int]:
    """Salientes primero, luego la entrante de mayor entropía y el resto de entrantes."""
    outgoing = [k for k, cls in enumerate(problem.classes) if cls is FlowClass.OUTGOING]
    incoming = [k for k, cls in enumerate(problem.classes) if cls is FlowClass.INCOMING]
    entropies = {k: specific_entropy(problem.traces[k], problem.pipes[k].params) for k in incoming}
    ref = max(incoming, key=lambda k: (entropies[k], -k))
    return outgoing + [ref] + [k for k in incoming if k != ref]


def _check_traces(problem: JunctionProblem):
    for pipe, trace, cls in zip(problem.pipes, problem.traces, problem.classes):
        c = sound_speed(trace, pipe.params)
        if abs(trace.u) >= c:
            raise SupersonicStateError(f"Traza no subsónica en '{pipe.label}': |u|={abs(trace.u):.6g} >= c={c:.6g}")
        if trace.u > 0.0 and cls is FlowClass.INCOMING or trace.u < 0.0 and cls is FlowClass.OUTGOING:
            raise FlowClassificationError(
                f"La traza de '{pipe.label}' (u={trace.u:.6g}) contradice la clase declarada {cls.value}"
            )


# ==================== Newton ====================

def _scaled_state(x: np.ndarray, problem: JunctionProblem, scales: np.ndarray):
    params = CouplingParams.from_vector(x, problem.n_pipes)
    values = _evaluate(params, problem)
    residual = _residual_from_values(values, problem) / scales
    return params, values, residual


def _reversed_pipes(problem: JunctionProblem, values: Sequence[TraceDerivatives]) -> List[str]:
    return [
        pipe.label
        for pipe, value, cls in zip(problem.pipes, values, problem.classes)
        if value.u != 0.0 and (value.u > 0.0) != (cls is FlowClass.OUTGOING)
    ]


def _no_convergence(problem: JunctionProblem, values: Sequence[TraceDerivatives], message: str,
                    iterations: int, norm: float) -> AppBaseException:
    """Distingue un estancamiento causado por inversión de flujo de una falta de convergencia común."""
    reversed_pipes = _reversed_pipes(problem, values)
    if reversed_pipes:
        return FlowReversalError(
            f"{message}; el iterado invierte el flujo en: {', '.join(reversed_pipes)}", reversed_pipes,
        )
    return NoConvergenceError(message, iterations, norm)


def _newton_step(problem: JunctionProblem, values, residual: np.ndarray, scales: np.ndarray) -> np.ndarray:
    jac = _jacobian_from_values(values, problem) / scales[:, None]
    return np.linalg.solve(jac, -residual)


def _newton(problem: JunctionProblem, x0: np.ndarray, tol: float, max_iter: int, max_halvings: int):
    scales = row_scales(problem)
    x = np.asarray(x0, dtype=float)
    params, values, residual = _scaled_state(x, problem, scales)
    norm = float(np.max(np.abs(residual)))
    iterations = 0
    while norm > tol:
        if iterations >= max_iter:
            raise _no_convergence(
                problem, values,
                f"Newton de la unión sin converger tras {iterations} iteraciones (residuo {norm:.3e})",
                iterations, norm,
            )
        step = _newton_step(problem, values, residual, scales)
        damping = 1.0
        for _ in range(max_halvings + 1):
            trial = x + damping * step
            try:
                trial_state = _scaled_state(trial, problem, scales)
            except (DomainError, DegenerateInflowError):
                damping *= 0.5
                continue
            trial_norm = float(np.max(np.abs(trial_state[2])))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            damping *= 0.5
        else:
            raise _no_convergence(
                problem, values,
                f"Búsqueda lineal agotada en la iteración {iterations} (residuo {norm:.3e})",
                iterations, norm,
            )
        x = trial
        params, values, residual = trial_state
        norm = trial_norm
        iterations += 1
        logger.debug(f"Newton unión: iteración {iterations}, residuo {norm:.3e}, amortiguamiento {damping:g}")

    # paso de pulido: no cuenta como iteración y deja intactas las soluciones sin pasos
    if iterations > 0 and norm > 0.0:
        try:
            trial = x + _newton_step(problem, values, residual, scales)
            trial_state = _scaled_state(trial, problem, scales)
            trial_norm = float(np.max(np.abs(trial_state[2])))
            if np.isfinite(trial_norm) and trial_norm < norm:
                params, values, residual = trial_state
                norm = trial_norm
        except (DomainError, DegenerateInflowError, np.linalg.LinAlgError):
            pass
    return params, values, norm, iterations


def _fallback_start(problem: JunctionProblem) -> np.ndarray:
    nu = np.array([pipe.nu_norm for pipe in problem.pipes])
    pressures = np.array([trace.p for trace in problem.traces])
    mean = float(np.sum(nu * pressures) / np.sum(nu))
    return np.concatenate([np.full(problem.n_pipes, mean), np.zeros(problem.n_outgoing)])


def _solve_canonical(problem: JunctionProblem, initial_guess: Optional[CouplingParams]):
    tol, max_iter, halvings = settings.JUNCTION_TOL, settings.JUNCTION_MAX_ITER, settings.JUNCTION_MAX_HALVINGS
    start = np.asarray((initial_guess or base_params(problem)).as_vector(), dtype=float)
    try:
        return _newton(problem, start, tol, max_iter, halvings)
    except (DegenerateInflowError, np.linalg.LinAlgError) as e:
        if initial_guess is not None:
            raise
        logger.warning(f"Punto de partida por defecto no evaluable ({type(e).__name__}); reintentando con la presión media")
        return _newton(problem, _fallback_start(problem), tol, max_iter, halvings)


def check_star_states(problem: JunctionProblem, states: Sequence[GasState]):
    """
    Valida los estados estrella contra la clasificación del problema.

    Raises:
        SupersonicStateError: Si un estado estrella no es subsónico
        StagnantFlowError: Si un estado estrella tiene velocidad exactamente nula
        FlowReversalError: Si un estado estrella contradice la clasificación I_i / I_o
    """
    # en los modos de presión el reposo total es la solución identidad
    at_rest = problem.mode is not CouplingMode.ENTROPY_MIX and all(state.u == 0.0 for state in states)
    reversed_pipes = []
    for pipe, state, cls in zip(problem.pipes, states, problem.classes):
        c = sound_speed(state, pipe.params)
        if abs(state.u) >= c:
            raise SupersonicStateError(f"Estado estrella no subsónico en '{pipe.label}': |u*|={abs(state.u):.6g} >= c*={c:.6g}")
        if at_rest:
            continue
        if state.u == 0.0:
            raise StagnantFlowError(f"Estado estrella estancado en '{pipe.label}': u* = 0 no pertenece a D+ ni a D-")
        if (state.u > 0.0) != (cls is FlowClass.OUTGOING):
            reversed_pipes.append(pipe.label)
    if reversed_pipes:
        raise FlowReversalError(f"Inversión de flujo en el estado estrella de: {', '.join(reversed_pipes)}", reversed_pipes)


def solve_junction(problem: JunctionProblem, initial_guess: Optional[CouplingParams] = None) -> StarSolution:
    """
    Resuelve el problema de Riemann generalizado en la unión.

    Args:
        problem: Problema de la unión (cualquier orden de tuberías)
        initial_guess: Punto de partida opcional, en el orden canónico

    Returns:
        StarSolution: Parámetros raíz y estados estrella, en el orden del problema

    Raises:
        SupersonicStateError: Si una traza o un estado estrella no es subsónico
        NoConvergenceError: Si Newton no converge
        FlowReversalError: Si un estado estrella contradice la clasificación I_i / I_o
        DegenerateInflowError: Si el flujo entrante neto es nulo incluso en el reintento
    """
    start_time = time.perf_counter()
    _check_traces(problem)
    order = canonical_order(problem)
    canonical = problem.permuted(order)
    try:
        params, values, norm, iterations = _solve_canonical(canonical, initial_guess)
    except AppBaseException:
        raise
    except np.linalg.LinAlgError as e:
        log_exception(logger, e, "solve_junction")
        raise NoConvergenceError(f"Jacobiano singular en la unión: {str(e)}")

    canonical_states = [GasState(rho=v.rho, u=v.u, p=v.p) for v in values]
    check_star_states(canonical, canonical_states)

    inverse = [0] * len(order)
    for position, k in enumerate(order):
        inverse[k] = position
    states = tuple(canonical_states[inverse[k]] for k in range(problem.n_pipes))
    n_out = problem.n_outgoing
    tau_by_pipe = {order[i]: params.tau[i] for i in range(n_out)}
    outgoing = [k for k, cls in enumerate(problem.classes) if cls is FlowClass.OUTGOING]
    solution_params = CouplingParams(
        sigma=tuple(params.sigma[inverse[k]] for k in range(problem.n_pipes)),
        tau=tuple(tau_by_pipe[k] for k in outgoing),
    )
    diagnostics = _diagnostics(problem, states)
    solution = StarSolution(
        mode=problem.mode,
        labels=tuple(pipe.label for pipe in problem.pipes),
        params=solution_params,
        star_states=states,
        residual_norm=norm,
        iterations=iterations,
        diagnostics=diagnostics,
    )
    duration_ms = (time.perf_counter() - start_time) * 1000
    log_solver_summary(logger, f"solve_junction[{problem.mode.value}]", iterations, norm, duration_ms)
    return solution


def solve_junction_pressure_mode(problem: JunctionProblem,
                                 initial_guess: Optional[CouplingParams] = None) -> StarSolution:
    """
    Resuelve la unión con igualdad de presión (P) o de presión dinámica (P_D).

    Raises:
        InvalidJunctionError: Si el modo no es de presión o N_o != 1
    """
    if problem.mode is CouplingMode.ENTROPY_MIX:
        raise InvalidJunctionError("solve_junction_pressure_mode requiere un modo de presión")
    if problem.n_outgoing != 1:
        raise InvalidJunctionError(f"Los modos de presión requieren N_o = 1 (N_o={problem.n_outgoing})")
    return solve_junction(problem, initial_guess)


# ==================== Conservación ====================

def _diagnostics(problem: JunctionProblem, states: Sequence[GasState]) -> ConservationDiagnostics:
    nu = np.array([pipe.nu_norm for pipe in problem.pipes])
    q = np.array([state.q for state in states])
    h = np.array([total_enthalpy(state, pipe.params) for pipe, state in zip(problem.pipes, states)])
    s = np.array([specific_entropy(state, pipe.params) for pipe, state in zip(problem.pipes, states)])
    c_v = max(pipe.params.c_v for pipe in problem.pipes)
    mass_terms = nu * q
    entropy_flux = float(np.sum(mass_terms * s))
    # s está definida salvo una constante aditiva: la escala incluye c_v
    entropy_scale = float(np.max(np.abs(mass_terms)) * max(float(np.max(np.abs(s))), c_v))
    return ConservationDiagnostics(
        mass_flux=float(np.sum(mass_terms)),
        energy_flux=float(np.sum(mass_terms * h)),
        entropy_flux=entropy_flux,
        mass_scale=float(np.max(np.abs(mass_terms))),
        energy_scale=float(np.max(np.abs(mass_terms * h))),
        entropy_scale=entropy_scale,
        entropy_admissible=entropy_flux >= -settings.CONSERVATION_RTOL * entropy_scale,
    )


def verify_conservation(solution: StarSolution, problem: JunctionProblem) -> ConservationDiagnostics:
    """
    Sumas Σ‖ν‖q*, Σ‖ν‖(qh)*, Σ‖ν‖(qs)* de una solución y la desigualdad (S).

    Args:
        solution: Solución convergida (en el orden del problema)
        problem: Problema original

    Returns:
        ConservationDiagnostics: Sumas, escalas y admisibilidad entrópica
    """
    return _diagnostics(problem, solution.star_states)


# ==================== Equivalencia con el problema estándar ====================

def junction_from_standard_riemann(left: GasState, right: GasState, params: GasParams,
                                   nu_norm: float = 1.0, u_star: Optional[float] = None,
                                   mode: CouplingMode = CouplingMode.ENTROPY_MIX) -> JunctionProblem:
    """
    Problema de dos tuberías equivalente a un problema de Riemann estándar.

    La tubería 'right' lleva U_R en x > 0; la tubería 'left' lleva U_L reflejado
    (ν_2 = -ν_1). Las clases se toman del signo de u* (calculado con solve_star si no se da).
    """
    pipes = (
        PipeSpec(label="right", nu_norm=nu_norm, params=params),
        PipeSpec(label="left", nu_norm=nu_norm, params=params),
    )
    if u_star is None:
        u_star = solve_star(left, right, params).u_star
    if u_star >= 0.0:
        classes = (FlowClass.OUTGOING, FlowClass.INCOMING)
    else:
        classes = (FlowClass.INCOMING, FlowClass.OUTGOING)
    return JunctionProblem(pipes=pipes, traces=(right, left.mirrored()), classes=classes, mode=mode)


def standard_riemann_from_junction(solution: StarSolution,
                                   problem: JunctionProblem) -> Tuple[GasState, GasState, StarState]:
    """
    Reconstruye el problema estándar (U_L, U_R) y su región estrella a partir de
    una solución de dos tuberías con ‖ν_1‖ = ‖ν_2‖ y el mismo gas.

    La primera tubería es el semieje derecho; la segunda, el izquierdo reflejado.
    """
    if problem.n_pipes != 2:
        raise InvalidJunctionError(f"La equivalencia requiere exactamente dos tuberías (N={problem.n_pipes})")
    first, second = problem.pipes
    if first.nu_norm != second.nu_norm or first.params != second.params:
        raise InvalidJunctionError("La equivalencia requiere secciones y gases iguales")
    right = problem.traces[0]
    left = problem.traces[1].mirrored()
    sigma_right, sigma_left = solution.params.sigma
    star = StarState(
        p_star=solution.star_states[0].p,
        u_star=solution.star_states[0].u,
        rho_L_star=phi(sigma_left, left, first.params),
        rho_R_star=phi(sigma_right, right, first.params),
        iterations=solution.iterations,
    )
    return left, right, star


# ==================== Estados estacionarios acoplados ====================

def coupled_stationary_traces(pipes: Sequence[PipeSpec], classes: Sequence[FlowClass], enthalpy: float,
                              incoming: Sequence[Tuple[float, float]],
                              shares: Optional[Sequence[float]] = None) -> Tuple[GasState, ...]:
    """
    Construye trazas constantes con Φ(Ū) = 0.

    Args:
        pipes: Tuberías de la unión
        classes: Clase de cada tubería
        enthalpy: Entalpía total común h*
        incoming: Pares (ρ, u) de las entrantes (u < 0), en el orden en que aparecen
        shares: Fracción del caudal entrante total que recibe cada saliente (por defecto iguales)

    Returns:
        Tuple[GasState, ...]: Trazas en el orden de `pipes`

    Raises:
        DomainError: Si los datos no admiten un estado estacionario subsónico
    """
    incoming_idx = [k for k, cls in enumerate(classes) if cls is FlowClass.INCOMING]
    outgoing_idx = [k for k, cls in enumerate(classes) if cls is FlowClass.OUTGOING]
    if len(incoming) != len(incoming_idx):
        raise DomainError(f"Se esperaban {len(incoming_idx)} pares (ρ, u) entrantes")
    shares = np.ones(len(outgoing_idx)) if shares is None else np.asarray(shares, dtype=float)
    if len(shares) != len(outgoing_idx) or np.any(shares <= 0.0):
        raise DomainError("Las fracciones de caudal deben ser positivas, una por tubería saliente")
    shares = shares / np.sum(shares)

    traces = {}
    for k, (rho, u) in zip(incoming_idx, incoming):
        gamma = pipes[k].params.gamma
        if not u < 0.0:
            raise DomainError(f"La tubería entrante '{pipes[k].label}' necesita u < 0 (u={u})")
        p = (enthalpy - 0.5 * u * u) * (gamma - 1.0) * rho / gamma
        if not p > 0.0:
            raise DomainError(f"h*={enthalpy} no alcanza para la energía cinética de '{pipes[k].label}'")
        state = GasState(rho=rho, u=u, p=p)
        if abs(u) >= sound_speed(state, pipes[k].params):
            raise DomainError(f"La traza entrante de '{pipes[k].label}' no es subsónica")
        traces[k] = state

    nu_in = [pipes[k].nu_norm for k in incoming_idx]
    q_in = [traces[k].q for k in incoming_idx]
    s_in = [specific_entropy(traces[k], pipes[k].params) for k in incoming_idx]
    inflow = float(np.dot(nu_in, q_in))
    s_star = weighted_entropy(nu_in, q_in, s_in)

    for share, k in zip(shares, outgoing_idx):
        gamma, c_v = pipes[k].params.gamma, pipes[k].params.c_v
        q = -inflow * share / pipes[k].nu_norm
        adiabat = np.exp(s_star / c_v)

        def enthalpy_gap(rho, q=q, gamma=gamma, adiabat=adiabat):
            return gamma / (gamma - 1.0) * adiabat * rho ** (gamma - 1.0) + 0.5 * (q / rho) ** 2 - enthalpy

        rho_sonic = (q * q / (gamma * adiabat)) ** (1.0 / (gamma + 1.0))
        if not enthalpy_gap(rho_sonic) < 0.0:
            raise DomainError(f"No existe estado subsónico saliente para '{pipes[k].label}' con h*={enthalpy}")
        rho_high = 2.0 * rho_sonic
        while enthalpy_gap(rho_high) < 0.0:
            rho_high *= 2.0
        rho = brentq(enthalpy_gap, rho_sonic, rho_high, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500)
        traces[k] = GasState(rho=rho, u=q / rho, p=adiabat * rho ** gamma)

    return tuple(traces[k] for k in range(len(pipes)))


# ==================== Sonda de Lipschitz ====================

def _star_vector(solution: StarSolution, problem: JunctionProblem) -> np.ndarray:
    return np.concatenate([
        primitive_to_conservative(state, pipe.params) for pipe, state in zip(problem.pipes, solution.star_states)
    ])


def _perturbed_trace(trace: GasState, params: GasParams, delta: float, rng: np.random.Generator) -> GasState:
    rho, q, energy = primitive_to_conservative(trace, params)
    c = sound_speed(trace, params)
    kick = rng.uniform(-1.0, 1.0, size=3) * delta
    rho_new = rho * (1.0 + kick[0])
    q_new = q + kick[1] * rho * c
    energy_new = energy * (1.0 + kick[2])
    u_new = q_new / rho_new
    p_new = (params.gamma - 1.0) * (energy_new - 0.5 * q_new * u_new)
    return GasState(rho=rho_new, u=u_new, p=p_new)


def lipschitz_probe(problem: JunctionProblem, delta: float, trials: int,
                    rng: Optional[np.random.Generator] = None) -> LipschitzStats:
    """
    Cocientes empíricos ‖sol(Ũ) - sol(Ū)‖∞ / ‖Ũ - Ū‖∞ para perturbaciones de las
    trazas y, por separado, de las secciones ‖ν‖.

    Args:
        problem: Problema base resoluble
        delta: Escala relativa de la perturbación
        trials: Número de perturbaciones de cada tipo
        rng: Generador aleatorio (por defecto semilla VERIFY_SEED)

    Returns:
        LipschitzStats: Máximo y media de cada cociente (vacío si delta = 0 o trials = 0)
    """
    if delta <= 0.0 or trials <= 0:
        logger.warning("lipschitz_probe sin perturbaciones: estadísticas vacías")
        return LipschitzStats(delta=delta, trials=0)
    rng = rng or np.random.default_rng(settings.VERIFY_SEED)
    base_solution = solve_junction(problem)
    base_star = _star_vector(base_solution, problem)
    base_traces = np.concatenate([primitive_to_conservative(t, p.params) for p, t in zip(problem.pipes, problem.traces)])
    base_nu = np.array([pipe.nu_norm for pipe in problem.pipes])

    trace_ratios, nu_ratios = [], []
    for _ in range(trials):
        traces = [_perturbed_trace(t, p.params, delta, rng) for p, t in zip(problem.pipes, problem.traces)]
        perturbed = problem.with_traces(traces)
        distance = float(np.max(np.abs(
            np.concatenate([primitive_to_conservative(t, p.params) for p, t in zip(problem.pipes, traces)]) - base_traces
        )))
        solution = solve_junction(perturbed)
        trace_ratios.append(float(np.max(np.abs(_star_vector(solution, perturbed) - base_star))) / distance)

        nu = base_nu * (1.0 + delta * rng.uniform(-1.0, 1.0, size=base_nu.size))
        pipes = [pipe.model_copy(update={"nu_norm": float(value)}) for pipe, value in zip(problem.pipes, nu)]
        perturbed = problem.with_pipes(pipes)
        solution = solve_junction(perturbed)
        nu_ratios.append(float(np.max(np.abs(_star_vector(solution, perturbed) - base_star)))
                         / float(np.max(np.abs(nu - base_nu))))

    stats = LipschitzStats(
        delta=delta,
        trials=trials,
        trace_ratio_max=float(np.max(trace_ratios)),
        trace_ratio_mean=float(np.mean(trace_ratios)),
        nu_ratio_max=float(np.max(nu_ratios)),
        nu_ratio_mean=float(np.mean(nu_ratios)),
    )
    logger.info(f"lipschitz_probe(delta={delta:g}): trazas max={stats.trace_ratio_max:.4g}, ν max={stats.nu_ratio_max:.4g}")
    return stats
