import logging
import threading
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ..exceptions import ConstraintError
from ..models.operators import OperatorBundle
from ..models.pressure import RobinSolver, PressureMaps
from ..models.state import State
from .linear_solvers import factorize, solve_factorized

logger = logging.getLogger(__name__)

# Relative tolerance of the kinematic constraint check
KINEMATIC_TOL = 1e-8


class PressureService:
    """Service for the harmonic pressure: Robin maps R, R~ and the G maps."""
    
    def __init__(self):
        # Factorizations are cached per (grid, rho)
        self._solvers: Dict[Tuple, Tuple[RobinSolver, PressureMaps]] = {}
        self._lock = threading.Lock()
    
    def build_robin_solver(self, ops: OperatorBundle) -> RobinSolver:
        """Assemble and factorize the Robin operator for this grid and rho."""
        return self.build_pressure_maps(ops).robin
    
    def build_pressure_maps(self, ops: OperatorBundle) -> PressureMaps:
        """Robin solver plus the G_1, G_2 plumbing, cached per (grid, rho)."""
        key = (ops.topology.key, ops.rho)
        with self._lock:
            if key in self._solvers:
                return self._solvers[key][1]
        
        topology, fluid, plate = ops.topology, ops.fluid, ops.plate
        h = topology.h
        div = fluid.divergence
        interior = fluid.interior_embed
        neumann = (div @ interior @ interior.T @ div.T).tocsr()
        
        inertia_lu = factorize(plate.p_rho, "P_rho")
        # T P^-1 T^T on the Omega faces, dense in the plate block only
        t_dense = plate.to_faces.toarray()
        coupling = t_dense @ np.column_stack([solve_factorized(inertia_lu, row) for row in t_dense])
        e_top = fluid.omega_cells
        robin_term = e_top @ sp.csr_matrix(coupling) @ e_top.T / h
        operator = (neumann + robin_term).tocsr()
        
        lu = factorize(operator, "Robin pressure operator")
        solver = RobinSolver(
            rho=ops.rho,
            h=h,
            operator=operator,
            neumann=neumann,
            lu=lu,
            omega_source=(e_top @ plate.to_faces / h).tocsr(),
            s_source=(fluid.s_cells / h).tocsr(),
        )
        
        touching = np.unique(topology.face_cell[topology.boundary_faces])
        mask = np.ones(topology.n_cells, dtype=bool)
        mask[touching] = False
        maps = PressureMaps(
            robin=solver,
            fluid=fluid,
            plate=plate,
            inertia_lu=inertia_lu,
            interior_cells=np.flatnonzero(mask),
            boundary_cells=touching,
        )
        with self._lock:
            self._solvers[key] = (solver, maps)
        logger.info(f"Factorized Robin operator for grid {topology.key}, rho={ops.rho}")
        return maps
    
    def robin_solve(
        self,
        solver: RobinSolver,
        g_on_omega: Optional[np.ndarray] = None,
        g_on_s: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Harmonic cell field with Robin data on Omega (plate nodes) and Neumann data on S."""
        rhs = np.zeros(solver.n_cells, dtype=complex if self._any_complex(g_on_omega, g_on_s) else float)
        if g_on_omega is not None:
            if g_on_omega.shape != (solver.omega_source.shape[1],):
                raise ValueError("Omega data must live on the plate nodes")
            rhs = rhs + solver.omega_source @ g_on_omega
        if g_on_s is not None:
            if g_on_s.shape != (solver.s_source.shape[1],):
                raise ValueError("S data must live on the S faces")
            rhs = rhs + solver.s_source @ g_on_s
        return solve_factorized(solver.lu, rhs)
    
    def robin_residual(
        self,
        solver: RobinSolver,
        f: np.ndarray,
        g_on_omega: Optional[np.ndarray] = None,
        g_on_s: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Cell-wise residual of the discrete Robin problem for a candidate field."""
        res = solver.operator @ f
        if g_on_omega is not None:
            res = res - solver.omega_source @ g_on_omega
        if g_on_s is not None:
            res = res - solver.s_source @ g_on_s
        return res
    
    def inertia_solve(self, maps: PressureMaps, b: np.ndarray) -> np.ndarray:
        return solve_factorized(maps.inertia_lu, b)
    
    def g1(self, maps: PressureMaps, w: np.ndarray) -> np.ndarray:
        """G_1(w) = R(P_rho^-1 Delta^2 w)."""
        return self.robin_solve(maps.robin, self.inertia_solve(maps, maps.plate.bilaplacian @ w))
    
    def viscous_source(self, maps: PressureMaps, u: np.ndarray) -> np.ndarray:
        """Cell source of G_2: the divergence of the wall-masked viscous force plus its Omega traction.
        
        Vanishes on cells without a boundary face when u is divergence-free.
        """
        fluid, plate = maps.fluid, maps.plate
        lu_full = fluid.viscous @ u
        interior = fluid.interior_embed
        bulk = fluid.divergence @ (interior @ (interior.T @ lu_full))
        traction = plate.to_faces.T @ (fluid.omega_trace @ lu_full)
        return bulk + fluid.omega_cells @ (plate.to_faces @ self.inertia_solve(maps, traction))
    
    def g2(self, maps: PressureMaps, u: np.ndarray) -> np.ndarray:
        """G_2(u): Robin solve of the viscous boundary-layer source."""
        return solve_factorized(maps.robin.lu, self.viscous_source(maps, u))
    
    def check_kinematics(self, maps: PressureMaps, s: State) -> None:
        """Raise ConstraintError unless u is divergence-free and matches the plate velocity."""
        fluid, plate = maps.fluid, maps.plate
        if s.u.shape != (fluid.divergence.shape[1],) or s.w2.shape != (plate.n_nodes,):
            raise ConstraintError("State does not live on this grid")
        scale = max(np.max(np.abs(s.u), initial=0.0), np.max(np.abs(s.w2), initial=0.0), 1e-300)
        div_res = np.max(np.abs(fluid.divergence @ s.u), initial=0.0) * fluid.h
        s_res = np.max(np.abs(fluid.s_trace @ s.u), initial=0.0)
        omega_res = np.max(np.abs(fluid.omega_trace @ s.u - plate.to_faces @ s.w2), initial=0.0)
        worst = max(div_res, s_res, omega_res) / scale
        if worst > KINEMATIC_TOL:
            raise ConstraintError(
                f"State violates the kinematic constraints (divergence {div_res:.3e}, "
                f"S trace {s_res:.3e}, interface {omega_res:.3e})"
            )
    
    def pressure_from_state(self, maps: PressureMaps, s: State) -> np.ndarray:
        """p = G_1(w1) + G_2(u) for a kinematically admissible state."""
        self.check_kinematics(maps, s)
        p = self.g1(maps, s.w1) + self.g2(maps, s.u)
        logger.debug(f"Pressure reconstructed, max |p| = {np.max(np.abs(p)):.3e}")
        return p
    
    def harmonic_residual(self, maps: PressureMaps, p: np.ndarray) -> float:
        """Largest |Delta_h p| over cells without a boundary face."""
        res = maps.robin.neumann @ p
        return float(np.max(np.abs(res[maps.interior_cells]), initial=0.0))
    
    def h1_norm(self, maps: PressureMaps, p: np.ndarray) -> float:
        """Discrete H1(O) norm of a cell field."""
        fluid = maps.fluid
        grad = fluid.gradient @ p
        vol = fluid.cell_volume
        return float(np.sqrt(vol * np.sum(np.abs(p) ** 2) + vol * np.sum(np.abs(grad) ** 2)))
    
    def l2_norm(self, maps: PressureMaps, p: np.ndarray) -> float:
        return float(np.sqrt(maps.fluid.cell_volume * np.sum(np.abs(p) ** 2)))
    
    @staticmethod
    def _any_complex(*arrays) -> bool:
        return any(a is not None and np.iscomplexobj(a) for a in arrays)
