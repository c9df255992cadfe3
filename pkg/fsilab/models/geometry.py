from typing import List, Tuple
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class DimMode(str, Enum):
    """Spatial setting of the cavity."""
    ANALOGUE2D = "analogue2d"  # 2-D fluid, 1-D beam
    BOX3D = "box3d"  # 3-D fluid, 2-D plate


class BoundaryKind(str, Enum):
    """Boundary portion a face belongs to."""
    S = "S"
    OMEGA = "Omega"


# Integer codes used in GridTopology.face_kind
INTERIOR_CODE = -1
S_CODE = 0
OMEGA_CODE = 1


class GeometryConfig(BaseModel):
    """Geometry section of a run configuration."""
    dim_mode: DimMode = DimMode.ANALOGUE2D
    n: int = Field(8, description="cells per side of the unit box, at least 2")
    
    @property
    def dim(self) -> int:
        return 2 if self.dim_mode == DimMode.ANALOGUE2D else 3
    
    @property
    def h(self) -> float:
        return 1.0 / self.n


class GridTopology(BaseModel):
    """Staggered grid of the unit box with its fluid, pressure and plate index maps.
    
    Velocity component k lives on the faces normal to axis k. Faces are numbered
    component by component, C-order inside each component block. The interface
    Omega is the top face (last axis at 1); every other boundary face belongs to S.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    dim_mode: DimMode
    dim: int
    n: int
    h: float
    
    # Pressure cells
    n_cells: int
    cell_centers: np.ndarray
    
    # Velocity faces
    face_shapes: List[Tuple[int, ...]]
    face_offsets: List[int]
    n_faces: int
    face_axis: np.ndarray
    face_centers: np.ndarray
    interior_faces: np.ndarray
    boundary_faces: np.ndarray
    face_kind: np.ndarray  # INTERIOR_CODE, S_CODE or OMEGA_CODE per face
    outward_sign: np.ndarray  # +1/-1 on boundary faces, 0 inside
    face_cell: np.ndarray  # adjacent cell of a boundary face, -1 inside
    s_faces: np.ndarray
    omega_faces: np.ndarray  # ordered like the plate DOFs
    top_cells: np.ndarray  # cell below each Omega face
    
    # Plate: one unknown per Omega face, at the face centre; the clamped edge is half a cell beyond the outer DOFs
    plate_shape: Tuple[int, ...]
    n_plate: int
    plate_nodes: np.ndarray  # plate DOF coordinates
    omega_plate: np.ndarray  # plate DOF paired with each Omega face
    normal: Tuple[float, ...]  # outward unit normal on Omega
    
    @property
    def n_interior_faces(self) -> int:
        return int(self.interior_faces.size)
    
    @property
    def n_omega(self) -> int:
        return int(self.omega_faces.size)
    
    @property
    def plate_dim(self) -> int:
        return self.dim - 1
    
    @property
    def key(self) -> Tuple[str, int]:
        """Hashable grid identity."""
        return (self.dim_mode.value, self.n)
    
    def omega_normal(self, face_id: int) -> Tuple[float, ...]:
        """Outward normal on an Omega face."""
        if self.face_kind[face_id] != OMEGA_CODE:
            raise ValueError(f"Face {face_id} is not an Omega face")
        return self.normal
