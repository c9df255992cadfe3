import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ..exceptions import ConfigurationError
from ..models.geometry import GridTopology, INTERIOR_CODE
from ..models.geometry import GeometryConfig
from ..models.operators import FluidOperators, PlateOperators, EnergyMetric, OperatorBundle
from ..models.state import State
from .geometry_grid import GridService, face_index_blocks

logger = logging.getLogger(__name__)


def _selection(rows: np.ndarray, cols: np.ndarray, shape: Tuple[int, int]) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=shape)


def _clamped_second_difference(n: int, h: float) -> sp.csr_matrix:
    """1-D second difference at the n DOFs and both clamped edges, rows ordered edge, DOFs, edge.
    
    DOFs sit at (i + 1/2) h, so the spacing to an edge is h/2. The edge holds w = 0
    and its ghost mirrors the adjacent DOF (w' = 0).
    """
    rows, cols, vals = [0, n + 1], [0, n - 1], [8.0, 8.0]
    for i in range(n):
        r = i + 1
        if i == 0 or i == n - 1:
            # uneven stencil: edge at h/2 on one side, a DOF at h on the other
            inner = 1 if i == 0 else n - 2
            rows += [r, r]
            cols += [i, inner]
            vals += [-4.0, 4.0 / 3.0]
            continue
        rows += [r, r, r]
        cols += [i - 1, i, i + 1]
        vals += [1.0, -2.0, 1.0]
    return sp.csr_matrix((np.array(vals) / h ** 2, (rows, cols)), shape=(n + 2, n))


def _edge_weights(n: int) -> np.ndarray:
    """Trapezoid weights, in units of h, of the points of _clamped_second_difference."""
    weights = np.ones(n + 2)
    weights[[0, -1]] = 0.25
    weights[[1, -2]] = 0.75
    return weights


class OperatorService:
    """Service assembling the discrete fluid and plate operators and the energy metric."""
    
    def __init__(self, grid_service: Optional[GridService] = None):
        self.grid_service = grid_service or GridService()
    
    def assemble(self, geometry: GeometryConfig, rho: float) -> OperatorBundle:
        """Grid, fluid and plate operators and the energy metric in one go."""
        topology = self.grid_service.build_grid(geometry)
        fluid = self.assemble_fluid_ops(topology)
        plate = self.assemble_plate_ops(topology, rho)
        return OperatorBundle(
            topology=topology,
            fluid=fluid,
            plate=plate,
            metric=self.assemble_metric(topology, plate),
        )
    
    def assemble_fluid_ops(self, topology: GridTopology) -> FluidOperators:
        """Divergence, gradient, viscous Laplacian and boundary traces on the MAC grid."""
        n, d, h = topology.n, topology.dim, topology.h
        n_faces, n_cells = topology.n_faces, topology.n_cells
        blocks = face_index_blocks(topology)
        cells = np.arange(n_cells)
        
        rows, cols, vals = [], [], []
        for k in range(d):
            lo = np.take(blocks[k], np.arange(n), axis=k).ravel()
            hi = np.take(blocks[k], np.arange(1, n + 1), axis=k).ravel()
            rows += [cells, cells]
            cols += [hi, lo]
            vals += [np.full(n_cells, 1.0 / h), np.full(n_cells, -1.0 / h)]
        divergence = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_cells, n_faces),
        )
        interior_mask = (topology.face_kind == INTERIOR_CODE).astype(float)
        gradient = -(sp.diags(interior_mask) @ divergence.T).tocsr()
        
        viscous = self._viscous_laplacian(topology, blocks)
        
        n_int = topology.n_interior_faces
        n_omega = topology.n_omega
        n_s = int(topology.s_faces.size)
        fluid = FluidOperators(
            h=h,
            dim=d,
            divergence=divergence,
            gradient=gradient,
            viscous=viscous,
            interior_embed=_selection(topology.interior_faces, np.arange(n_int), (n_faces, n_int)),
            omega_trace=_selection(np.arange(n_omega), topology.omega_faces, (n_omega, n_faces)),
            s_trace=_selection(np.arange(n_s), topology.s_faces, (n_s, n_faces)),
            omega_cells=_selection(topology.top_cells, np.arange(n_omega), (n_cells, n_omega)),
            s_cells=_selection(topology.face_cell[topology.s_faces], np.arange(n_s), (n_cells, n_s)),
        )
        logger.debug(f"Assembled fluid operators on {n_faces} faces, {n_cells} cells")
        return fluid
    
    def _viscous_laplacian(self, topology: GridTopology, blocks) -> sp.csr_matrix:
        """Weighted difference graph of all velocity components, L = G^T W G / h^2.
        
        Own-axis pairs carry weight 1. Tangential pairs carry the face weight
        (1 inside, 1/2 on a boundary face). The tangential wall pair couples a
        face to its zero-velocity ghost, difference 2u, at half the face weight.
        """
        n, d, h = topology.n, topology.dim, topology.h
        rows, cols, vals, weights = [], [], [], []
        n_pairs = 0
        
        def add_pairs(a, b, w):
            nonlocal n_pairs
            ids = n_pairs + np.arange(a.size)
            rows.extend([ids, ids])
            cols.extend([a, b])
            vals.extend([-np.ones(a.size), np.ones(a.size)])
            weights.append(w)
            n_pairs += a.size
        
        def add_walls(f, w):
            nonlocal n_pairs
            ids = n_pairs + np.arange(f.size)
            rows.append(ids)
            cols.append(f)
            vals.append(np.full(f.size, 2.0))
            weights.append(w)
            n_pairs += f.size
        
        for k in range(d):
            blk = blocks[k]
            ik = np.indices(blk.shape)[k]
            face_weight = np.where((ik == 0) | (ik == n), 0.5, 1.0)
            for j in range(d):
                length = blk.shape[j]
                a = np.take(blk, np.arange(length - 1), axis=j).ravel()
                b = np.take(blk, np.arange(1, length), axis=j).ravel()
                if j == k:
                    add_pairs(a, b, np.ones(a.size))
                    continue
                add_pairs(a, b, np.take(face_weight, np.arange(length - 1), axis=j).ravel())
                for end in (0, length - 1):
                    f = np.take(blk, [end], axis=j).ravel()
                    add_walls(f, 0.5 * np.take(face_weight, [end], axis=j).ravel())
        
        incidence = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_pairs, topology.n_faces),
        )
        w = sp.diags(np.concatenate(weights))
        return ((incidence.T @ w @ incidence) / h ** 2).tocsr()
    
    def assemble_plate_ops(self, topology: GridTopology, rho: float) -> PlateOperators:
        """Clamped plate operators A_D, P_rho, bilaplacian and the plate-to-face map."""
        if rho < 0:
            raise ConfigurationError(f"physics.rho must be non-negative, got {rho}")
        
        n, h = topology.n, topology.h
        plate_dim = topology.plate_dim
        
        # Dirichlet ghost -w beyond each edge
        main = np.full(n, 2.0)
        main[[0, -1]] = 3.0
        d2 = sp.diags([np.ones(n - 1), -main, np.ones(n - 1)], [-1, 0, 1], shape=(n, n)) / h ** 2
        lf = _clamped_second_difference(n, h)
        edge_weights = _edge_weights(n)
        
        if plate_dim == 1:
            a_d = -d2
            laplacian_full = lf
            node_weights = edge_weights
        else:
            eye = sp.identity(n)
            embed = _selection(np.arange(1, n + 1), np.arange(n), (n + 2, n))
            a_d = -(sp.kron(d2, eye) + sp.kron(eye, d2))
            laplacian_full = sp.kron(lf, embed) + sp.kron(embed, lf)
            node_weights = np.outer(edge_weights, edge_weights).ravel()
        
        a_d = sp.csr_matrix(a_d)
        laplacian_full = sp.csr_matrix(laplacian_full)
        bilaplacian = (laplacian_full.T @ sp.diags(node_weights) @ laplacian_full).tocsr()
        p_rho = (sp.identity(topology.n_plate) + rho * a_d).tocsr()
        to_faces = _selection(np.arange(topology.n_omega), topology.omega_plate, (topology.n_omega, topology.n_plate))
        
        logger.debug(f"Assembled plate operators, {topology.n_plate} DOFs, rho={rho}, clamped closure (ghost mirrors the edge DOF)")
        return PlateOperators(
            h=h,
            dim=plate_dim,
            rho=rho,
            n_nodes=topology.n_plate,
            a_d=a_d,
            p_rho=p_rho,
            bilaplacian=bilaplacian,
            laplacian_full=laplacian_full,
            node_weights=node_weights,
            to_faces=to_faces,
        )
    
    def assemble_metric(self, topology: GridTopology, plate: PlateOperators) -> EnergyMetric:
        """Energy metric M_rho for the given plate operators."""
        return EnergyMetric(
            rho=plate.rho,
            n_faces=topology.n_faces,
            n_plate=topology.n_plate,
            interior_faces=topology.interior_faces,
            fluid_weight=topology.h ** topology.dim,
            plate_weight=plate.mass_weight,
            stiffness=plate.bilaplacian,
            inertia=plate.p_rho,
        )
    
    def energy_inner_product(self, a: State, b: State, metric: EnergyMetric) -> complex:
        """(a, b) in H_rho, linear in a and antilinear in b."""
        for s in (a, b):
            if s.u.shape != (metric.n_faces,) or s.w1.shape != (metric.n_plate,) or s.w2.shape != (metric.n_plate,):
                raise ValueError("State does not live on the metric's grid")
        idx = metric.interior_faces
        fluid = metric.fluid_weight * np.dot(a.u[idx], np.conj(b.u[idx]))
        plate = metric.plate_weight * (
            np.dot(a.w1, metric.stiffness @ np.conj(b.w1))
            + np.dot(a.w2, metric.inertia @ np.conj(b.w2))
        )
        return complex(fluid + plate)
    
    def energy_norm(self, s: State, metric: EnergyMetric) -> float:
        return float(np.sqrt(max(self.energy_inner_product(s, s, metric).real, 0.0)))
    
    def domain_norm(self, s: State, fluid: FluidOperators, plate: PlateOperators) -> float:
        """Discrete graph-type norm: H1 of u, Delta^2 w1, and the stiffness norm of w2."""
        u_sq = fluid.cell_volume * np.sum(np.abs(s.u) ** 2) + fluid.gradient_norm_sq(s.u)
        bw1 = plate.bilaplacian @ s.w1
        w1_sq = plate.mass_weight * np.sum(np.abs(bw1) ** 2)
        w2_sq = plate.stiffness_product(s.w2, s.w2).real
        return float(np.sqrt(u_sq + w1_sq + w2_sq))
