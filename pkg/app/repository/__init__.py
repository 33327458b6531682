from app.models.base import OutputRepository
from app.repository.csv_output import CsvOutputRepository

__all__ = ['OutputRepository', 'CsvOutputRepository']
