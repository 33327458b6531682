import logging
import sys
from typing import Optional

from app.core.config import settings


def setup_logger(
    name: str = "junction",
    level: Optional[str] = None,
    log_file: Optional[str] = None,
    log_format: Optional[str] = None
) -> logging.Logger:
    """
    Configura y retorna un logger con handler de consola y, opcionalmente, de archivo.

    Args:
        name: Nombre del logger
        level: Nivel de logging (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Archivo de log (None para no escribir a disco)
        log_format: Formato de los mensajes de log

    Returns:
        logging.Logger: Logger configurado
    """
    level = (level or settings.LOG_LEVEL).upper()
    log_file = log_file if log_file is not None else settings.LOG_FILE
    formatter = logging.Formatter(log_format or settings.LOG_FORMAT)

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Evitar duplicación de handlers
    if logger.handlers:
        logger.handlers.clear()

    # Stream Handler (stderr: stdout queda para la salida de los comandos)
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setLevel(level)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    # File Handler
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Obtiene un logger hijo del logger principal de la aplicación.

    Args:
        name: Nombre del logger (usualmente __name__ del módulo)

    Returns:
        logging.Logger: Logger configurado
    """
    return logging.getLogger(f"junction.{name}")


def log_exception(logger: logging.Logger, exception: Exception, context: str = ""):
    """
    Loguea una excepción con contexto adicional.

    Args:
        logger: Logger a utilizar
        exception: Excepción a loguear
        context: Contexto adicional sobre dónde ocurrió el error
    """
    error_msg = "Excepción capturada"
    if context:
        error_msg += f" en {context}"
    error_msg += f": {type(exception).__name__} - {str(exception)}"
    logger.error(error_msg, exc_info=True)


def log_solver_summary(logger: logging.Logger, solver: str, iterations: int, residual: float, duration_ms: float):
    """
    Loguea el resumen de una resolución no lineal.

    Args:
        logger: Logger a utilizar
        solver: Nombre del solver
        iterations: Iteraciones de Newton realizadas
        residual: Norma del residuo final
        duration_ms: Duración en milisegundos
    """
    logger.info(
        f"{solver} - Iteraciones: {iterations} - Residuo: {residual:.3e} - Duration: {duration_ms:.2f}ms"
    )


# Logger principal de la aplicación
app_logger = setup_logger(name="junction")
