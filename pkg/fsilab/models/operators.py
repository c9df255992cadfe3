from typing import Any

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict


class FluidOperators(BaseModel):
    """Staggered-grid fluid operators on the full face vector.
    
    `viscous` is the weighted graph Laplacian L with u^T L u * h^d = ||grad_h u||^2,
    wall ghosts included; its interior rows are minus the usual MAC Laplacian.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    h: float
    dim: int
    divergence: Any  # cells x faces
    gradient: Any  # faces x cells, -divergence^T on interior faces, zero on boundary rows
    viscous: Any  # faces x faces, symmetric positive semidefinite
    interior_embed: Any  # faces x interior faces
    omega_trace: Any  # Omega faces x faces
    s_trace: Any  # S faces x faces
    omega_cells: Any  # cells x Omega faces, top-cell incidence
    s_cells: Any  # cells x S faces, boundary-cell incidence
    
    @property
    def laplacian(self) -> sp.spmatrix:
        """Discrete vector Laplacian (interior rows are the standard 2nd-order stencil)."""
        return -self.viscous
    
    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim
    
    def gradient_norm_sq(self, u_full: np.ndarray) -> float:
        """||grad_h u||^2 of a full face vector (real or complex)."""
        lu = self.viscous @ u_full
        return float(np.real(np.vdot(u_full, lu))) * self.cell_volume


class PlateOperators(BaseModel):
    """Plate operators on the face-centred DOFs of the clamped plate."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    h: float
    dim: int  # plate dimension
    rho: float
    n_nodes: int
    a_d: Any  # Dirichlet -Laplacian
    p_rho: Any  # I + rho * A_D
    bilaplacian: Any  # clamped Delta^2_h = L_full^T W L_full
    laplacian_full: Any  # Delta_h at the DOFs and on the clamped edges (ghost closure)
    node_weights: np.ndarray  # trapezoid weights of laplacian_full rows, in units of h^(plate dim)
    to_faces: Any  # pairing map T, plate DOFs -> Omega faces (a permutation)
    
    @property
    def mass_weight(self) -> float:
        """Quadrature weight h^(plate dim) of the plate L2 product."""
        return self.h ** self.dim
    
    def mean(self, w: np.ndarray) -> complex:
        return np.sum(w) / w.size
    
    def mean_project(self, w: np.ndarray) -> np.ndarray:
        """Remove the average; orthogonal in the plate mass product."""
        return w - self.mean(w)
    
    def stiffness_product(self, a: np.ndarray, b: np.ndarray) -> complex:
        """(Delta_h a, Delta_h b) over Omega, linear in a, antilinear in b."""
        return self.mass_weight * np.dot(a, self.bilaplacian @ np.conj(b))


class EnergyMetric(BaseModel):
    """Block energy (mass) matrix M_rho on (u, w1, w2) triples."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    rho: float
    n_faces: int
    n_plate: int
    interior_faces: np.ndarray
    fluid_weight: float  # h^d on interior faces
    plate_weight: float  # h^(d-1)
    stiffness: Any  # bilaplacian
    inertia: Any  # P_rho
    
    @property
    def n_coordinates(self) -> int:
        return int(self.interior_faces.size) + 2 * self.n_plate
    
    def coordinate_mass(self) -> sp.spmatrix:
        """M_rho in coordinates (interior u, w1, w2)."""
        n_int = int(self.interior_faces.size)
        return sp.block_diag(
            [
                self.fluid_weight * sp.identity(n_int),
                self.plate_weight * self.stiffness,
                self.plate_weight * self.inertia,
            ],
            format="csr",
        )


class OperatorBundle(BaseModel):
    """Everything assembled for one (grid, rho) pair."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    topology: Any
    fluid: FluidOperators
    plate: PlateOperators
    metric: EnergyMetric
    
    @property
    def rho(self) -> float:
        return self.plate.rho
