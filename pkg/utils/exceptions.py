"""
Exception hierarchy for the AH quasilocal mass toolkit
"""

from typing import Any, Dict, Optional


class AHMassError(Exception):
    """Base class for all toolkit errors"""

    def __init__(self, message: str, stage: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.stage = stage
        self.details = details or {}

    def __str__(self) -> str:
        message = super().__str__()
        if self.stage:
            return f"[{self.stage}] {message}"
        return message


class ConfigurationError(AHMassError):
    """Invalid grid sizes, coefficient tables or experiment config"""


class DomainError(AHMassError):
    """An operation was called outside its mathematical domain"""


class SolverError(AHMassError):
    """An iterative or ODE solver did not reach its target"""

    def __init__(self, message: str, residual: Optional[float] = None,
                 stage: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message, stage=stage, details=details)
        self.residual = residual


class GeometryError(AHMassError):
    """A containment certificate failed"""


class NormalizationError(AHMassError):
    """The O(3) gauge could not be fixed"""
