"""
Módulo API - Contiene el esquema del escenario y los manejadores de los subcomandos.

Este módulo separa la interfaz de línea de comandos de la lógica numérica,
siguiendo el principio de separación de responsabilidades.
"""

from app.api.commands import set_simulation_service
from app.api.schemas import load_scenario

__all__ = ["load_scenario", "set_simulation_service"]
