from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict


class RobinSolver(BaseModel):
    """Factorized cell operator of the harmonic Robin/Neumann problem.
    
    The operator is N + (1/h) E_top T P_rho^-1 T^T E_top^T, where N is the
    Neumann cell Laplacian (velocity walls closed) and the second term is the
    Robin closure on the top cells. Data enter through `omega_source`
    (plate nodes) and `s_source` (S faces).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    rho: float
    h: float
    operator: Any
    neumann: Any
    lu: Any  # scipy.sparse.linalg.SuperLU
    omega_source: Any  # cells x plate nodes
    s_source: Any  # cells x S faces
    
    @property
    def n_cells(self) -> int:
        return int(self.operator.shape[0])


class PressureMaps(BaseModel):
    """G_1 (plate displacement -> pressure) and G_2 (velocity -> pressure), matrix-free."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    robin: RobinSolver
    fluid: Any  # FluidOperators
    plate: Any  # PlateOperators
    inertia_lu: Any  # factorization of P_rho
    interior_cells: np.ndarray  # cells without a boundary face
    boundary_cells: np.ndarray
    
    @property
    def rho(self) -> float:
        return self.robin.rho
    
