from typing import Any, Dict, Optional


class FsiLabError(Exception):
    """Base class for all laboratory errors."""


class ConfigurationError(FsiLabError, ValueError):
    """Invalid geometry, physics, control or experiment configuration."""


class ConstraintError(FsiLabError, ValueError):
    """A state or data triple violates the discrete energy-space constraints."""


class NumericalError(FsiLabError, RuntimeError):
    """A numerical computation failed or violated one of its invariants."""
    
    def __init__(self, message: str, payload: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.payload = payload or {}
