"""Utilities Package"""

from .logger import logger, setup_logger
from .exceptions import (
    GACDException,
    ConfigValidationError,
    UnknownDatasetError,
    DatasetError,
    CheckpointError,
    DegenerateProjectionError,
    NonFiniteError,
    ShapeMismatchError,
    InsufficientNegativesError,
    BankIndexError,
    ClassCountMismatchError,
    FrozenBackboneError,
    ReportMismatchError,
)

__all__ = [
    "logger",
    "setup_logger",
    "GACDException",
    "ConfigValidationError",
    "UnknownDatasetError",
    "DatasetError",
    "CheckpointError",
    "DegenerateProjectionError",
    "NonFiniteError",
    "ShapeMismatchError",
    "InsufficientNegativesError",
    "BankIndexError",
    "ClassCountMismatchError",
    "FrozenBackboneError",
    "ReportMismatchError",
]
