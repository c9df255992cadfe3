import logging
from typing import List, Tuple

import numpy as np

from ..exceptions import ConfigurationError
from ..models.geometry import (
    GeometryConfig,
    GridTopology,
    BoundaryKind,
    INTERIOR_CODE,
    S_CODE,
    OMEGA_CODE,
)

logger = logging.getLogger(__name__)


def face_index_blocks(topology: GridTopology) -> List[np.ndarray]:
    """Global face ids of every velocity component, shaped like its face grid."""
    return [
        topology.face_offsets[k] + np.arange(int(np.prod(shape))).reshape(shape)
        for k, shape in enumerate(topology.face_shapes)
    ]


class GridService:
    """Service building the staggered grid of the unit box."""
    
    def build_grid(self, config: GeometryConfig) -> GridTopology:
        """Build the MAC layout, boundary classification and plate maps."""
        if config.n < 2:
            raise ConfigurationError(f"geometry.n must be >= 2, got {config.n}")
        
        d = config.dim
        n = config.n
        h = 1.0 / n
        
        cell_shape = (n,) * d
        cell_idx = np.indices(cell_shape).reshape(d, -1).T
        cell_centers = (cell_idx + 0.5) * h
        cells = np.arange(n ** d).reshape(cell_shape)
        
        face_shapes: List[Tuple[int, ...]] = []
        face_offsets: List[int] = []
        axis_parts, center_parts, kind_parts, sign_parts, cell_parts = [], [], [], [], []
        offset = 0
        for k in range(d):
            shape = tuple(n + 1 if j == k else n for j in range(d))
            size = int(np.prod(shape))
            face_shapes.append(shape)
            face_offsets.append(offset)
            offset += size
            
            idx = np.indices(shape).reshape(d, -1).T
            centers = (idx + 0.5) * h
            centers[:, k] = idx[:, k] * h
            
            ik = idx[:, k]
            kind = np.full(size, INTERIOR_CODE, dtype=np.int8)
            kind[(ik == 0) | (ik == n)] = S_CODE
            if k == d - 1:
                kind[ik == n] = OMEGA_CODE
            
            sign = np.zeros(size)
            sign[ik == 0] = -1.0
            sign[ik == n] = 1.0
            
            # Adjacent cell: the one on the inner side of a boundary face
            adj = idx.copy()
            adj[:, k] = np.clip(ik, 0, n - 1)
            adj_cell = np.where(
                kind != INTERIOR_CODE,
                np.ravel_multi_index(tuple(adj.T), cell_shape),
                -1,
            )
            
            axis_parts.append(np.full(size, k, dtype=int))
            center_parts.append(centers)
            kind_parts.append(kind)
            sign_parts.append(sign)
            cell_parts.append(adj_cell)
        
        face_kind = np.concatenate(kind_parts)
        face_centers_all = np.vstack(center_parts)
        n_faces = offset
        all_faces = np.arange(n_faces)
        
        # Omega faces in C-order of the tangential index, like the plate DOFs
        top_block = face_offsets[d - 1] + np.arange(int(np.prod(face_shapes[d - 1]))).reshape(
            face_shapes[d - 1]
        )
        omega_faces = top_block[..., n].ravel()
        top_cells = cells[..., n - 1].ravel()
        
        plate_dim = d - 1
        plate_shape = (n,) * plate_dim
        plate_nodes = np.array(face_centers_all[omega_faces])
        
        normal = tuple(1.0 if j == d - 1 else 0.0 for j in range(d))
        
        topology = GridTopology(
            dim_mode=config.dim_mode,
            dim=d,
            n=n,
            h=h,
            n_cells=n ** d,
            cell_centers=cell_centers,
            face_shapes=face_shapes,
            face_offsets=face_offsets,
            n_faces=n_faces,
            face_axis=np.concatenate(axis_parts),
            face_centers=face_centers_all,
            interior_faces=all_faces[face_kind == INTERIOR_CODE],
            boundary_faces=all_faces[face_kind != INTERIOR_CODE],
            face_kind=face_kind,
            outward_sign=np.concatenate(sign_parts),
            face_cell=np.concatenate(cell_parts),
            s_faces=all_faces[face_kind == S_CODE],
            omega_faces=omega_faces,
            top_cells=top_cells,
            plate_shape=plate_shape,
            n_plate=n ** plate_dim,
            plate_nodes=plate_nodes,
            omega_plate=np.arange(n ** plate_dim),
            normal=normal,
        )
        logger.debug(
            f"Built {config.dim_mode.value} grid n={n}: {topology.n_cells} cells, "
            f"{n_faces} faces, {topology.n_plate} plate nodes"
        )
        return topology
    
    def classify_boundary(self, topology: GridTopology, face_id: int) -> BoundaryKind:
        """Boundary portion of a boundary face: top face is Omega, the rest is S."""
        if not 0 <= face_id < topology.n_faces:
            raise ValueError(f"Face id {face_id} out of range")
        code = int(topology.face_kind[face_id])
        if code == INTERIOR_CODE:
            raise ValueError(f"Face {face_id} is an interior face")
        return BoundaryKind.OMEGA if code == OMEGA_CODE else BoundaryKind.S
    
