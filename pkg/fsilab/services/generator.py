import logging
import threading
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..exceptions import NumericalError
from ..models.generator import Generator
from ..models.geometry import GeometryConfig, GridTopology
from ..models.operators import OperatorBundle
from ..models.pressure import PressureMaps
from ..models.run_config import DEFAULT_SEED
from ..models.state import State
from .discrete_operators import OperatorService
from .pressure_harmonic import PressureService

logger = logging.getLogger(__name__)

DISSIPATIVITY_TOL = 1e-8
DISSIPATIVITY_SAMPLES = 100


class GeneratorService:
    """Service assembling and applying the fluid-structure generator."""
    
    def __init__(
        self,
        operator_service: Optional[OperatorService] = None,
        pressure_service: Optional[PressureService] = None,
    ):
        self.operator_service = operator_service or OperatorService()
        self.pressure_service = pressure_service or PressureService()
        self._generators: Dict[Tuple, Generator] = {}
        self._lock = threading.Lock()
    
    def build(self, geometry: GeometryConfig, rho: float) -> Generator:
        """Operators, pressure maps and generator for (grid, rho), cached."""
        key = (geometry.dim_mode.value, geometry.n, float(rho))
        with self._lock:
            if key in self._generators:
                return self._generators[key]
        ops = self.operator_service.assemble(geometry, rho)
        maps = self.pressure_service.build_pressure_maps(ops)
        gen = self.assemble_generator(ops, maps, rho)
        with self._lock:
            self._generators[key] = gen
        return gen
    
    @staticmethod
    def expected_reduced_dim(topology: GridTopology) -> int:
        """Interior faces minus independent divergence rows, plus mean-zero w1 and w2."""
        return topology.n_interior_faces - topology.n_cells + 2 * topology.n_plate - 1
    
    def lift_matrix(self, ops: OperatorBundle) -> sp.csr_matrix:
        """Full face velocity from coordinates: interior u plus T w2 on Omega."""
        fluid, plate = ops.fluid, ops.plate
        m = plate.n_nodes
        q_v = fluid.omega_trace.T @ plate.to_faces
        return sp.hstack(
            [fluid.interior_embed, sp.csr_matrix((ops.topology.n_faces, m)), q_v], format="csr"
        )
    
    def constraint_matrix(self, ops: OperatorBundle, lift: sp.csr_matrix) -> sp.csr_matrix:
        """Divergence of the lifted velocity, then the means of w1 and w2."""
        n_int, m = ops.topology.n_interior_faces, ops.plate.n_nodes
        ones = np.ones((1, m))
        means = sp.bmat(
            [
                [sp.csr_matrix((1, n_int)), ones, sp.csr_matrix((1, m))],
                [sp.csr_matrix((1, n_int)), sp.csr_matrix((1, m)), ones],
            ]
        )
        return sp.vstack([ops.fluid.divergence @ lift, means], format="csr")
    
    def forcing_matrix(self, ops: OperatorBundle, lift: sp.csr_matrix) -> sp.csr_matrix:
        """F = -lift^T (h^d L) lift + plate stiffness coupling (skew)."""
        n_int, m = ops.topology.n_interior_faces, ops.plate.n_nodes
        fluid, plate = ops.fluid, ops.plate
        viscous = -(lift.T @ fluid.viscous @ lift) * fluid.cell_volume
        kb = plate.mass_weight * plate.bilaplacian
        skew = sp.bmat(
            [
                [sp.csr_matrix((n_int, n_int)), None, None],
                [None, sp.csr_matrix((m, m)), kb],
                [None, -kb, sp.csr_matrix((m, m))],
            ]
        )
        return (viscous + skew).tocsr()
    
    def assemble_generator(self, ops: OperatorBundle, maps: PressureMaps, rho: float) -> Generator:
        """Null-space basis, reduced generator and the dissipativity check."""
        if abs(ops.rho - rho) > 0 or abs(maps.rho - rho) > 0:
            raise ValueError(f"Operators (rho={ops.rho}) and pressure maps (rho={maps.rho}) do not match rho={rho}")
        
        lift = self.lift_matrix(ops)
        constraints = self.constraint_matrix(ops, lift)
        forcing = self.forcing_matrix(ops, lift)
        coord_mass = ops.metric.coordinate_mass()
        
        raw = sla.null_space(constraints.toarray())
        expected = self.expected_reduced_dim(ops.topology)
        if raw.shape[1] != expected:
            raise NumericalError(
                f"Constraint null space has dimension {raw.shape[1]}, expected {expected}",
                {"null_dim": raw.shape[1], "expected": expected},
            )
        gram = raw.T @ (coord_mass @ raw)
        chol = sla.cholesky(0.5 * (gram + gram.T), lower=True)
        basis = sla.solve_triangular(chol, raw.T, lower=True).T
        a_red = basis.T @ (forcing @ basis)
        
        gen = Generator(
            rho=rho,
            ops=ops,
            maps=maps,
            basis=basis,
            a_red=a_red,
            metric_red=np.eye(basis.shape[1]),
            coord_mass=coord_mass,
            lift=lift,
            forcing=forcing,
            constraints=constraints,
        )
        worst = self.check_dissipativity(gen)
        logger.info(
            f"Assembled generator {gen.grid_id}, rho={rho}: reduced dim {gen.dim}, "
            f"dissipativity error {worst:.2e}"
        )
        return gen
    
    def check_dissipativity(self, gen: Generator, samples: int = DISSIPATIVITY_SAMPLES, seed: Optional[int] = None) -> float:
        """Worst relative error of <Az, z> = -||grad u||^2 - 2i Im(Dw1, Dw2) over random z."""
        rng = np.random.default_rng(DEFAULT_SEED if seed is None else seed)
        scale = np.linalg.norm(gen.a_red)
        worst = 0.0
        for _ in range(samples):
            z = rng.standard_normal(gen.dim) + 1j * rng.standard_normal(gen.dim)
            s = self.from_reduced(gen, z)
            lhs = np.vdot(z, gen.a_red @ z)
            rhs = -self.dissipation(gen, s) + 1j * self.coupling_term(gen, s)
            denom = max(abs(rhs), 1e-14 * scale * np.vdot(z, z).real)
            worst = max(worst, abs(lhs - rhs) / denom)
        if worst > DISSIPATIVITY_TOL:
            raise NumericalError(
                f"Generator violates the energy identity (relative error {worst:.3e})",
                {"relative_error": worst, "grid": gen.grid_id, "rho": gen.rho},
            )
        return worst
    
    def dissipation(self, gen: Generator, s: State) -> float:
        """||grad_h u||^2."""
        return gen.ops.fluid.gradient_norm_sq(s.u)
    
    def coupling_term(self, gen: Generator, s: State) -> float:
        """-2 Im(Delta w1, Delta w2)."""
        return float(-2.0 * np.imag(gen.ops.plate.stiffness_product(s.w1, s.w2)))
    
    def to_coordinates(self, gen: Generator, s: State) -> np.ndarray:
        return np.concatenate([s.u[gen.ops.topology.interior_faces], s.w1, s.w2])
    
    def from_coordinates(self, gen: Generator, x: np.ndarray) -> State:
        n_int, m = gen.n_interior, gen.n_plate
        return State(u=gen.lift @ x, w1=x[n_int:n_int + m].copy(), w2=x[n_int + m:].copy())
    
    def to_reduced(self, gen: Generator, s: State) -> np.ndarray:
        """Reduced coordinates of the M-orthogonal projection of s."""
        return gen.basis.T @ (gen.coord_mass @ self.to_coordinates(gen, s))
    
    def from_reduced(self, gen: Generator, z: np.ndarray) -> State:
        return self.from_coordinates(gen, gen.basis @ z)
    
    def project_to_state(self, gen: Generator, raw: State) -> State:
        """M_rho-orthogonal projection of a raw triple onto the constrained space."""
        return self.from_reduced(gen, self.to_reduced(gen, raw))
    
    def random_state(self, gen: Generator, rng: np.random.Generator, complex_valued: bool = False) -> State:
        """Random constrained state with independent normal reduced coordinates."""
        z = rng.standard_normal(gen.dim)
        if complex_valued:
            z = z + 1j * rng.standard_normal(gen.dim)
        return self.from_reduced(gen, z)
    
    def apply_with_residual(self, gen: Generator, s: State) -> Tuple[State, float]:
        """A s through the pressure-multiplier route, with its relative distance to the constrained space."""
        ops = gen.ops
        fluid, plate = ops.fluid, ops.plate
        n_int, m = gen.n_interior, gen.n_plate
        
        x = self.to_coordinates(gen, s)
        p = self.pressure_service.pressure_from_state(gen.maps, s)
        rhs = gen.forcing @ x + fluid.cell_volume * (gen.lift.T @ (fluid.divergence.T @ p))
        
        w2_dot = self.pressure_service.inertia_solve(gen.maps, rhs[n_int + m:]) / plate.mass_weight
        x_dot = np.concatenate([rhs[:n_int] / fluid.cell_volume, s.w2, w2_dot])
        
        projected = gen.basis @ (gen.basis.T @ (gen.coord_mass @ x_dot))
        gap = x_dot - projected
        norm = np.sqrt(abs(np.vdot(x_dot, gen.coord_mass @ x_dot)))
        residual = float(np.sqrt(abs(np.vdot(gap, gen.coord_mass @ gap))) / max(norm, 1e-300))
        logger.debug(f"Generator applied, range projection residual {residual:.2e}")
        return self.from_coordinates(gen, x_dot), residual
    
    def apply_generator(self, gen: Generator, s: State) -> State:
        """A_rho s for a constrained state."""
        return self.apply_with_residual(gen, s)[0]
    
    def apply_reduced(self, gen: Generator, z: np.ndarray) -> np.ndarray:
        return gen.a_red @ z
