from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from .state import State


class ProjectionP(BaseModel):
    """Projection P onto the complement of phi, orthogonal in (Delta., Delta.).
    
    phi solves the clamped Delta^2 phi = 1. Since (Delta w, Delta phi) is the
    plate sum of w, Pw = w - (sum w / sum phi) phi, and the range of P is the
    mean-zero plate data.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    phi: np.ndarray
    phi_sum: float
    bilaplacian_lu: Any
    
    def coefficient(self, w: np.ndarray) -> complex:
        """Delta^2 (I - P) w, a constant."""
        return np.sum(w) / self.phi_sum
    
    def apply(self, w: np.ndarray) -> np.ndarray:
        return w - self.coefficient(w) * self.phi
    
    def complement(self, w: np.ndarray) -> np.ndarray:
        return self.coefficient(w) * self.phi


class ResolventDiagnostics(BaseModel):
    """Residuals and identity gaps of one resolvent solve."""
    residual: float  # ||(i beta - A) y - y*||_M / ||y*||_M
    dissipation_gap: float  # | ||grad u||^2 - Re <y*, y> | relative
    trace_gap: float  # max |i beta w1 - w2 - w1*|, relative
    face_trace_gap: float  # same relation on the Omega faces
    pressure_gap: Optional[float] = None  # constructive pressure vs G-map pressure
    harmonic_residual: Optional[float] = None  # scaled |Delta_h pi| on cells away from the walls
    passed: bool = True


class ResolventSolution(BaseModel):
    """Solution y of (i beta - A) y = y* (or A y = y* for the constructive inverse)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    beta: float
    state: State
    pressure: np.ndarray  # pi_0
    data: State
    diagnostics: ResolventDiagnostics
    method: str  # "constructive" or "reduced"
    grid_id: str
    rho: float


class LiftReport(BaseModel):
    """Integration-by-parts check against the Stokes lift psi of w1."""
    pressure_side_real: float
    pressure_side_imag: float
    volume_side_real: float
    volume_side_imag: float
    gap: float  # |pressure side - volume side|
    traction: float  # |discrete normal traction term|, the expected gap
    closure_gap: float  # gap once the traction term is included
    h: float
