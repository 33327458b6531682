from typing import Any, List, Optional


class AppBaseException(Exception):
    """Clase base para excepciones personalizadas de la aplicación."""
    def __init__(self, message=None):
        base_message = "Junction Error: "
        if message:
            self.message = f"{base_message}{message}"
        else:
            self.message = f"{base_message}Ocurrió un error en la aplicación"
        super().__init__(self.message)


# ==================== Estados y parámetros ====================

class DomainError(AppBaseException):
    """Se lanza cuando un estado o parámetro está fuera de su dominio físico."""
    def __init__(self, message="Estado fuera del dominio (densidad o presión no positiva)"):
        super().__init__(message)


class VacuumError(DomainError):
    """Se lanza cuando el problema de Riemann genera vacío."""
    def __init__(self, message="Los datos generan vacío (condición de positividad de presión violada)"):
        super().__init__(message)


class InvalidCellError(DomainError):
    """Se lanza cuando una celda queda con un estado inválido tras una actualización."""
    def __init__(self, pipe: str, cell: int, message: Optional[str] = None):
        self.pipe = pipe
        self.cell = cell
        detail = message or "densidad o presión no positiva"
        super().__init__(f"Celda inválida en la tubería '{pipe}', índice {cell}: {detail}")


# ==================== Clasificación del flujo ====================

class FlowClassificationError(AppBaseException):
    """Se lanza cuando un estado no pertenece a D+ ni a D-."""
    def __init__(self, message="El estado no puede clasificarse como entrante ni saliente"):
        super().__init__(message)


class SupersonicStateError(FlowClassificationError):
    """Se lanza cuando un estado no es estrictamente subsónico."""
    def __init__(self, message="El estado no es subsónico (|u| >= c)"):
        super().__init__(message)


class StagnantFlowError(FlowClassificationError):
    """Se lanza cuando la velocidad es exactamente cero."""
    def __init__(self, message="Velocidad nula: el estado no pertenece a D+ ni a D-"):
        super().__init__(message)


# ==================== Solvers ====================

class NoConvergenceError(AppBaseException):
    """Se lanza cuando un método iterativo agota sus iteraciones."""
    def __init__(self, message="El método iterativo no convergió", iterations: int = 0, residual: float = float("nan")):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class FlowReversalError(AppBaseException):
    """Se lanza cuando un estado estrella contradice la clasificación I_i / I_o del problema."""
    def __init__(self, message="Inversión de flujo en el estado estrella de la unión", pipes: Optional[List[str]] = None):
        self.pipes = pipes or []
        super().__init__(message)


class DegenerateInflowError(AppBaseException):
    """Se lanza cuando el flujo másico entrante neto es (casi) nulo y s* no está definido."""
    def __init__(self, message="Flujo entrante neto nulo: la mezcla de entropía s* no está definida"):
        super().__init__(message)


class InvalidJunctionError(AppBaseException):
    """Se lanza cuando la unión no cumple N > N_o > 0 o los requisitos del modo de acoplamiento."""
    def __init__(self, message="Configuración de la unión inválida"):
        super().__init__(message)


# ==================== Escenarios ====================

class ScenarioError(AppBaseException):
    """Clase base para errores en el archivo de escenario."""
    def __init__(self, message="Archivo de escenario inválido", violations: Optional[List[str]] = None):
        self.violations = violations or []
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


class ScenarioParseError(ScenarioError):
    """Se lanza cuando el archivo de escenario no se puede leer o interpretar."""
    def __init__(self, message="No se pudo interpretar el archivo de escenario", line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (línea {line}, columna {column})")


class ScenarioSchemaError(ScenarioError):
    """Se lanza cuando el escenario no cumple el esquema."""
    def __init__(self, violations: List[str]):
        super().__init__("El escenario no cumple el esquema", violations)


class ScenarioPhysicsError(ScenarioError):
    """Se lanza cuando el escenario viola invariantes físicos."""
    def __init__(self, violations: List[str]):
        super().__init__("El escenario viola invariantes físicos", violations)


# ==================== Simulación y salidas ====================

class SimulationError(AppBaseException):
    """Se lanza cuando la simulación falla; conserva los resultados parciales."""
    def __init__(self, cause: AppBaseException, step: int, time: float, partial: Any = None):
        self.cause = cause
        self.step = step
        self.time = time
        self.partial = partial
        super().__init__(f"Fallo en el paso {step} (t={time:.17g}): {cause.message}")


class OutputWriteError(AppBaseException):
    """Se lanza cuando no se pueden escribir los archivos de salida."""
    def __init__(self, message="No se pudieron escribir los archivos de salida"):
        super().__init__(message)
