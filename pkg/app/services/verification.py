"""
Verificaciones aleatorizadas con semilla fija.

Agrupa los oráculos del solver: Riemann exacto frente a bisección, auditoría del
jacobiano por diferencias centradas, signo de det(D_i), equivalencia de dos
tuberías con el problema estándar, conservación en la unión y sonda de Lipschitz.
"""
import time
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from app.core.config import settings
from app.models.domain import (
    CheckResult, CouplingParams, FlowClass, GasParams, GasState, InitialSegment, JunctionProblem,
    PipeSetup, PipeSpec, VerificationReport,
)
from app.models.exception import AppBaseException, DomainError
from app.services.euler_core import sound_speed
from app.services.junction_coupling import (
    base_params, canonical_order, coupled_stationary_traces, coupling_jacobian, coupling_residual,
    d_matrices, junction_from_standard_riemann, lipschitz_probe, row_scales, solve_junction,
    standard_riemann_from_junction, star_trace_derivatives,
)
from app.services.logger import get_logger
from app.services.network_sim import (
    GridPipe, PipeNetwork, advance_hyperbolic, advance_single_domain, cfl_dt, mirrored_network_to_domain,
)
from app.services.riemann_solver import psi, solve_star

logger = get_logger(__name__)

JacobianFn = Callable[[CouplingParams, JunctionProblem], np.ndarray]

LIPSCHITZ_DELTAS = (1e-2, 1e-3, 1e-4)


# ==================== Generadores ====================

def random_pair(rng: np.random.Generator, params: GasParams) -> Tuple[GasState, GasState]:
    """Par (U_L, U_R) aleatorio sin vacío."""
    while True:
        left = GasState(rho=rng.uniform(0.1, 2.0), u=rng.uniform(-1.0, 1.0), p=rng.uniform(0.1, 2.0))
        right = GasState(rho=rng.uniform(0.1, 2.0), u=rng.uniform(-1.0, 1.0), p=rng.uniform(0.1, 2.0))
        gap = 2.0 * (sound_speed(left, params) + sound_speed(right, params)) / (params.gamma - 1.0)
        if right.u - left.u < gap:
            return left, right


def base_singular_value(problem: JunctionProblem) -> float:
    """
    Menor valor singular del jacobiano adimensional en el punto base.

    Filas divididas por `row_scales`; columnas σ multiplicadas por la presión de la
    traza y columnas τ por su densidad, de modo que las incógnitas son relativas.
    """
    canonical = problem.permuted(canonical_order(problem))
    jac = coupling_jacobian(base_params(canonical), canonical) / row_scales(canonical)[:, None]
    columns = np.array([t.p for t in canonical.traces] + [t.rho for t in canonical.traces[:canonical.n_outgoing]])
    return float(np.linalg.svd(jac * columns[None, :], compute_uv=False)[-1])


def random_stationary_problem(rng: np.random.Generator, n_pipes: int, n_outgoing: int,
                              max_mach: float = 0.8, min_singular_value: Optional[float] = None) -> JunctionProblem:
    """
    Problema estacionario acoplado (Φ(Ū) = 0) con tuberías salientes primero.

    Cada tubería recibe su propio γ y c_v; se reintenta hasta obtener trazas con
    número de Mach menor que `max_mach` y un jacobiano base con menor valor singular
    adimensional de al menos `min_singular_value` (por defecto VERIFY_MIN_SINGULAR_VALUE).
    """
    bound = settings.VERIFY_MIN_SINGULAR_VALUE if min_singular_value is None else min_singular_value
    for _ in range(1000):
        pipes = tuple(
            PipeSpec(
                label=f"p{k}",
                nu_norm=float(rng.uniform(0.5, 2.0)),
                params=GasParams(gamma=float(rng.uniform(1.2, 1.67)), c_v=float(rng.uniform(0.5, 2.0))),
            )
            for k in range(n_pipes)
        )
        classes = tuple(FlowClass.OUTGOING if k < n_outgoing else FlowClass.INCOMING for k in range(n_pipes))
        incoming = [(float(rng.uniform(0.5, 2.0)), float(rng.uniform(-0.4, -0.05))) for _ in range(n_pipes - n_outgoing)]
        shares = rng.uniform(0.5, 1.5, size=n_outgoing)
        try:
            traces = coupled_stationary_traces(pipes, classes, float(rng.uniform(3.0, 6.0)), incoming, shares)
        except DomainError:
            continue
        if not all(abs(t.u) < max_mach * sound_speed(t, pipe.params) for pipe, t in zip(pipes, traces)):
            continue
        problem = JunctionProblem(pipes=pipes, traces=traces, classes=classes)
        if base_singular_value(problem) >= bound:
            return problem
    raise DomainError("No se pudo generar un estado estacionario subsónico bien condicionado")


def random_problem_shape(rng: np.random.Generator) -> Tuple[int, int]:
    n_pipes = int(rng.integers(2, 7))
    return n_pipes, int(rng.integers(1, n_pipes))


def perturbed(problem: JunctionProblem, rng: np.random.Generator, size: float = 1e-3) -> JunctionProblem:
    """Mismo problema con las presiones de las trazas perturbadas en ±size relativo."""
    traces = [
        GasState(rho=t.rho, u=t.u, p=t.p * (1.0 + size * rng.uniform(-1.0, 1.0))) for t in problem.traces
    ]
    return problem.with_traces(traces)


def random_mirrored_pair(rng: np.random.Generator, params: GasParams) -> Tuple[GasState, GasState]:
    """
    Par (U_L, U_R) con flujo hacia la derecha en ambos lados y región estrella subsónica,
    de modo que las dos tuberías reflejadas conserven su clasificación.
    """
    while True:
        left = GasState(rho=rng.uniform(0.5, 2.0), u=rng.uniform(0.05, 0.3), p=rng.uniform(0.5, 2.0))
        right = GasState(rho=rng.uniform(0.5, 2.0), u=rng.uniform(0.05, 0.3), p=rng.uniform(0.5, 2.0))
        star = solve_star(left, right, params)
        if star.u_star <= 0.0:
            continue
        left_star, right_star = star.left_state(), star.right_state()
        if star.u_star < 0.8 * min(sound_speed(left_star, params), sound_speed(right_star, params)):
            return left, right


def mirrored_pipe_network(left: GasState, right: GasState, params: GasParams,
                          cells: int = 20, length: float = 0.5) -> PipeNetwork:
    """Red de dos tuberías equivalente al tubo recto con discontinuidad en x = 0."""
    def setup(label: str, state: GasState, hint: FlowClass) -> PipeSetup:
        return PipeSetup(
            spec=PipeSpec(label=label, nu_norm=1.0, params=params),
            length=length,
            cells=cells,
            initial=(InitialSegment(x_start=0.0, x_end=length, state=state),),
            flow_hint=hint,
        )
    return PipeNetwork([
        GridPipe(setup("right", right, FlowClass.OUTGOING)),
        GridPipe(setup("left", left.mirrored(), FlowClass.INCOMING)),
    ])


# ==================== Oráculos ====================

def bisection_star_pressure(left: GasState, right: GasState, params: GasParams) -> float:
    """Presión estrella por bisección pura sobre g(p) = ψ(p,U_L) + ψ(p,U_R) + u_R - u_L."""
    def g(p):
        return psi(p, left, params) + psi(p, right, params) + right.u - left.u

    low = 1e-14 * min(left.p, right.p)
    high = max(left.p, right.p)
    while g(high) < 0.0:
        high *= 2.0
    return bisect(g, low, high, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=2000)


def finite_difference_jacobian(params: CouplingParams, problem: JunctionProblem, step: float) -> np.ndarray:
    """Jacobiano de `coupling_residual` por diferencias centradas."""
    x = np.asarray(params.as_vector(), dtype=float)
    columns = []
    for k in range(x.size):
        forward, backward = x.copy(), x.copy()
        forward[k] += step
        backward[k] -= step
        plus = coupling_residual(CouplingParams.from_vector(forward, problem.n_pipes), problem)
        minus = coupling_residual(CouplingParams.from_vector(backward, problem.n_pipes), problem)
        columns.append((plus - minus) / (2.0 * step))
    return np.column_stack(columns)


def _no_trials(name: str) -> CheckResult:
    return CheckResult(name=name, passed=True, trials=0, detail="no trials")


# ==================== Verificaciones ====================

def check_riemann_oracle(rng: np.random.Generator, trials: int) -> CheckResult:
    """|p*_Newton - p*_bisección| <= 1e-10·p*_bisección en pares aleatorios y en Sod."""
    name = "riemann_vs_bisection"
    if trials <= 0:
        return _no_trials(name)
    params = GasParams(gamma=1.4)
    pairs = [(GasState(rho=1.0, u=0.0, p=1.0), GasState(rho=0.125, u=0.0, p=0.1))]
    pairs += [random_pair(rng, params) for _ in range(trials)]
    worst = 0.0
    for left, right in pairs:
        oracle = bisection_star_pressure(left, right, params)
        worst = max(worst, abs(solve_star(left, right, params).p_star - oracle) / oracle)
    threshold = 1e-10
    return CheckResult(name=name, passed=worst <= threshold, trials=len(pairs), worst=worst, threshold=threshold)


def check_jacobian(rng: np.random.Generator, trials: int, jacobian: Optional[JacobianFn] = None) -> CheckResult:
    """
    Jacobiano analítico frente a diferencias centradas (h = VERIFY_FD_STEP) en el punto base
    de problemas estacionarios aleatorios, más el patrón de signos del punto base.
    """
    name = "jacobian_audit"
    if trials <= 0:
        return _no_trials(name)
    jacobian = jacobian or coupling_jacobian
    worst = 0.0
    failures = []
    for trial in range(trials):
        base = random_stationary_problem(rng, *random_problem_shape(rng))
        problem = base.permuted(canonical_order(base))
        params = base_params(problem)
        analytic = jacobian(params, problem)
        numeric = finite_difference_jacobian(params, problem, settings.VERIFY_FD_STEP)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
        failures.extend(f"trial {trial}: {issue}" for issue in sign_pattern_issues(problem, analytic))
    threshold = 1e-5
    detail = "; ".join(failures[:5])
    return CheckResult(name=name, passed=worst <= threshold and not failures, trials=trials,
                       worst=worst, threshold=threshold, detail=detail)


def sign_pattern_issues(problem: JunctionProblem, jacobian: np.ndarray) -> List[str]:
    """Comprueba q_σ > 0, q_τ > 0, h_σ > 0, h_τ < 0, s_τ < 0 y s*_σ(ref) <= 0 en el punto base."""
    issues = []
    n, ref = problem.n_pipes, problem.n_outgoing
    for k, (pipe, trace) in enumerate(zip(problem.pipes, problem.traces)):
        values = star_trace_derivatives(trace.p, 0.0 if k < ref else None, trace, pipe.params)
        if not values.q_sigma > 0.0 or not values.h_sigma > 0.0:
            issues.append(f"{pipe.label}: q_σ o h_σ no positivos")
        if k < ref and not (values.q_tau > 0.0 and values.h_tau < 0.0 and values.s_tau < 0.0):
            issues.append(f"{pipe.label}: signos en τ incorrectos")
    # fila de entropía: ∂σ_ref (s_i - s*) = -s*_σ(ref)
    s_star_ref = -jacobian[n, ref]
    if s_star_ref > 1e-12 * float(np.max(np.abs(jacobian[n]))):
        issues.append(f"s*_σ(ref) = {s_star_ref:.3e} > 0")
    return issues


def check_d_matrices(rng: np.random.Generator, trials: int) -> CheckResult:
    """det(D_i) < 0 con margen 1e-12 en unidades escaladas."""
    name = "det_D_negative"
    if trials <= 0:
        return _no_trials(name)
    worst = -np.inf
    count = 0
    for _ in range(trials):
        base = random_stationary_problem(rng, *random_problem_shape(rng))
        problem = base.permuted(canonical_order(base))
        scales = row_scales(problem)
        n, ref = problem.n_pipes, problem.n_outgoing
        for i, matrix in enumerate(d_matrices(problem)):
            rows = np.array([scales[0], scales[1 + i], scales[n + i]])
            columns = np.array([problem.traces[i].p, problem.traces[ref].p, problem.traces[i].rho])
            scaled = matrix / rows[:, None] * columns[None, :]
            worst = max(worst, float(np.linalg.det(scaled)))
            count += 1
    threshold = -1e-12
    return CheckResult(name=name, passed=worst < threshold, trials=count, worst=worst, threshold=threshold)


def check_two_pipe_equivalence(rng: np.random.Generator, trials: int, network_trials: int = 3, steps: int = 50) -> CheckResult:
    """
    Dos tuberías reflejadas: la traza estrella coincide con la región estrella izquierda del
    problema estándar (1e-9) en ambos sentidos, y la evolución de la red coincide celda a
    celda con el tubo recto durante `steps` pasos (1e-12).
    """
    name = "two_pipe_equivalence"
    if trials <= 0:
        return _no_trials(name)
    params = GasParams(gamma=1.4)
    worst_star = 0.0
    for _ in range(trials):
        left, right = random_mirrored_pair(rng, params)
        star = solve_star(left, right, params)
        problem = junction_from_standard_riemann(left, right, params, u_star=star.u_star)
        solution = solve_junction(problem)
        expected = star.left_state()
        y_right, y_left = solution.star_states
        worst_star = max(worst_star,
                         abs(y_right.rho - expected.rho), abs(y_right.u - expected.u), abs(y_right.p - expected.p),
                         abs(y_left.rho - expected.rho), abs(y_left.u + expected.u), abs(y_left.p - expected.p))
        _, _, rebuilt = standard_riemann_from_junction(solution, problem)
        worst_star = max(worst_star,
                         abs(rebuilt.p_star - star.p_star), abs(rebuilt.u_star - star.u_star),
                         abs(rebuilt.rho_L_star - star.rho_L_star), abs(rebuilt.rho_R_star - star.rho_R_star))

    worst_cells = 0.0
    for _ in range(min(network_trials, trials)):
        left, right = random_mirrored_pair(rng, params)
        worst_cells = max(worst_cells, mirrored_evolution_gap(left, right, params, steps))

    passed = worst_star <= 1e-9 and worst_cells <= 1e-12
    return CheckResult(name=name, passed=passed, trials=trials, worst=max(worst_star, worst_cells), threshold=1e-9,
                       detail=f"estrella {worst_star:.3e}, celdas {worst_cells:.3e}")


def mirrored_evolution_gap(left: GasState, right: GasState, params: GasParams, steps: int,
                           cells: Optional[int] = None, cfl: float = 0.9) -> float:
    """
    Máxima diferencia celda a celda entre la red reflejada y el tubo recto tras cada paso.

    Por defecto cada tubería tiene 3·steps celdas: con CFL < 1 las ondas del extremo
    lejano no alcanzan la unión durante la comparación.
    """
    cells = 3 * steps if cells is None else cells
    network = mirrored_pipe_network(left, right, params, cells=cells)
    domain = mirrored_network_to_domain(network)
    dx = network.pipes[0].dx
    worst = 0.0
    for _ in range(steps):
        dt = cfl_dt(network, cfl)
        advance_hyperbolic(network, dt)
        domain = advance_single_domain(domain, params.gamma, dx, dt)
        worst = max(worst, float(np.max(np.abs(mirrored_network_to_domain(network) - domain))))
    return worst


def check_conservation(rng: np.random.Generator, trials: int) -> CheckResult:
    """Sumas de masa, energía y entropía en la unión <= CONSERVATION_RTOL relativas."""
    name = "junction_conservation"
    if trials <= 0:
        return _no_trials(name)
    worst = 0.0
    for _ in range(trials):
        base = random_stationary_problem(rng, *random_problem_shape(rng))
        solution = solve_junction(perturbed(base, rng))
        worst = max(worst, *solution.diagnostics.relative())
    threshold = settings.CONSERVATION_RTOL
    return CheckResult(name=name, passed=worst <= threshold, trials=trials, worst=worst, threshold=threshold)


def check_lipschitz(rng: np.random.Generator, trials: int, seed: int) -> CheckResult:
    """Cocientes de Lipschitz acotados con crecimiento <= 2 entre niveles consecutivos de delta."""
    name = "lipschitz_probe"
    if trials <= 0:
        return _no_trials(name)
    problem = random_stationary_problem(rng, 3, 1)
    trace_max, nu_max = [], []
    for delta in LIPSCHITZ_DELTAS:
        # misma semilla en cada nivel: mismas direcciones de perturbación
        stats = lipschitz_probe(problem, delta, trials, np.random.default_rng(seed))
        trace_max.append(stats.trace_ratio_max)
        nu_max.append(stats.nu_ratio_max)
    growth = max(
        max(b / a for a, b in zip(trace_max, trace_max[1:])),
        max(b / a for a, b in zip(nu_max, nu_max[1:])),
    )
    finite = all(np.isfinite(trace_max + nu_max))
    return CheckResult(name=name, passed=finite and growth <= 2.0, trials=trials, worst=growth, threshold=2.0,
                       detail=f"trazas {trace_max}, ν {nu_max}")


def run_verification(seed: Optional[int] = None, trials: Optional[int] = None,
                     jacobian: Optional[JacobianFn] = None) -> VerificationReport:
    """
    Ejecuta todas las verificaciones con semilla fija.

    Args:
        seed: Semilla (por defecto VERIFY_SEED)
        trials: Ensayos por verificación (por defecto VERIFY_TRIALS)
        jacobian: Jacobiano a auditar (por defecto el analítico)

    Returns:
        VerificationReport: Resultado de cada verificación
    """
    seed = settings.VERIFY_SEED if seed is None else seed
    trials = settings.VERIFY_TRIALS if trials is None else trials
    if trials <= 0:
        logger.warning("verify sin ensayos: no se ejecuta ninguna verificación")
    rng = np.random.default_rng(seed)
    start_time = time.perf_counter()
    checks = []
    for name, runner in (
        ("riemann_vs_bisection", lambda: check_riemann_oracle(rng, trials)),
        ("jacobian_audit", lambda: check_jacobian(rng, trials, jacobian)),
        ("det_D_negative", lambda: check_d_matrices(rng, trials)),
        ("two_pipe_equivalence", lambda: check_two_pipe_equivalence(rng, trials)),
        ("junction_conservation", lambda: check_conservation(rng, trials)),
        ("lipschitz_probe", lambda: check_lipschitz(rng, min(trials, 50), seed)),
    ):
        try:
            result = runner()
        except AppBaseException as e:
            logger.error(f"Verificación {name} abortada: {type(e).__name__}: {e.message}")
            result = CheckResult(name=name, passed=False, trials=trials, detail=f"{type(e).__name__}: {e.message}")
        logger.info(f"{result.name}: {'OK' if result.passed else 'FALLO'} (peor={result.worst}, ensayos={result.trials})")
        checks.append(result)
    report = VerificationReport(seed=seed, trials=trials, checks=checks)
    logger.info(f"verify completado en {(time.perf_counter() - start_time) * 1000:.2f}ms - {'OK' if report.passed else 'FALLO'}")
    return report
