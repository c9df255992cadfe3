from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from .operators import OperatorBundle
from .pressure import PressureMaps


class Generator(BaseModel):
    """Reduced realization of A_rho on the constrained energy space.
    
    Coordinates x = (interior u, w1, w2) carry the mass M_c. The columns of
    `basis` span the constraint null space and are M_c-orthonormal, so
    `metric_red` is the identity and A_red = N^T F N.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    rho: float
    ops: OperatorBundle
    maps: PressureMaps
    basis: np.ndarray  # N, coordinates x reduced
    a_red: np.ndarray
    metric_red: np.ndarray
    coord_mass: Any  # M_c
    lift: Any  # faces x coordinates, u = lift @ x
    forcing: Any  # F, energy-weighted right-hand side without pressure
    constraints: Any  # divergence rows then the two plate means
    
    @property
    def dim(self) -> int:
        return int(self.a_red.shape[0])
    
    @property
    def n_coordinates(self) -> int:
        return int(self.basis.shape[0])
    
    @property
    def n_interior(self) -> int:
        return self.ops.topology.n_interior_faces
    
    @property
    def n_plate(self) -> int:
        return self.ops.topology.n_plate
    
    @property
    def grid_id(self) -> str:
        mode, n = self.ops.topology.key
        return f"{mode}-n{n}"
