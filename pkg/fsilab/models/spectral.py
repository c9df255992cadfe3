from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field


class SweepSample(BaseModel):
    """One resolvent-norm sample on the imaginary axis."""
    beta: float
    resolvent_norm: float


class DecayCertificate(BaseModel):
    """||e^{At}||_M <= M e^{-omega t}."""
    omega: float
    overshoot: float = Field(..., ge=1.0 - 1e-12, description="M, at least 1")
    horizon: float
    samples: int


class SpectralReport(BaseModel):
    """Eigenvalues, resolvent sweep and decay certificate of one generator."""
    grid_id: str
    rho: float
    reduced_dim: int
    method: str = "dense"
    eigenvalues_real: List[float] = Field(default_factory=list)
    eigenvalues_imag: List[float] = Field(default_factory=list)
    eigen_residuals: List[float] = Field(default_factory=list)
    abscissa: Optional[float] = None
    operator_norm: Optional[float] = None
    samples: List[SweepSample] = Field(default_factory=list)
    c_sup: Optional[float] = None
    beta_star: Optional[float] = None
    sup_interior: Optional[bool] = None
    boundary_warning: bool = False
    spectral_bound_gap: Optional[float] = None  # min over samples of norm - 1/dist(i beta, spectrum)
    tail_deviation: Optional[float] = None  # max |beta * norm - 1| on the tail
    certificate: Optional[DecayCertificate] = None
    note: str = (
        "In finite dimensions every stable matrix semigroup decays exponentially; "
        "the meaningful signal is the trend of the abscissa and C_sup under grid refinement."
    )
    
    def eigenvalues(self) -> np.ndarray:
        return np.array(self.eigenvalues_real) + 1j * np.array(self.eigenvalues_imag)
    
    def sweep_arrays(self):
        betas = np.array([s.beta for s in self.samples])
        norms = np.array([s.resolvent_norm for s in self.samples])
        return betas, norms
