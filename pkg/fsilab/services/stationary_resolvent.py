import logging
import threading
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..exceptions import ConstraintError, NumericalError
from ..models.generator import Generator
from ..models.operators import PlateOperators
from ..models.resolvent import ProjectionP, ResolventDiagnostics, ResolventSolution, LiftReport
from ..models.state import State
from .generator import GeneratorService
from .linear_solvers import factorize, solve_factorized

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
FLUX_TOL = 1e-10
SINGULAR_GROWTH = 1e12


class ResolventService:
    """Service for the constructive inverse at zero and resolvent solves on the imaginary axis."""
    
    def __init__(self, generator_service: Optional[GeneratorService] = None):
        self.generator_service = generator_service or GeneratorService()
        self._stokes: Dict[Tuple, object] = {}
        self._projections: Dict[Tuple, ProjectionP] = {}
        self._lock = threading.Lock()
    
    def build_projection(self, plate: PlateOperators) -> ProjectionP:
        """Solve the clamped Delta^2 phi = 1 and wrap the projection P."""
        lu = factorize(plate.bilaplacian, "clamped bilaplacian")
        phi = solve_factorized(lu, np.ones(plate.n_nodes))
        return ProjectionP(phi=phi, phi_sum=float(np.sum(phi)), bilaplacian_lu=lu)
    
    def projection_for(self, gen: Generator) -> ProjectionP:
        key = gen.ops.topology.key
        with self._lock:
            if key in self._projections:
                return self._projections[key]
        proj = self.build_projection(gen.ops.plate)
        with self._lock:
            self._projections[key] = proj
        return proj
    
    def _stokes_factor(self, gen: Generator):
        key = gen.ops.topology.key
        with self._lock:
            if key in self._stokes:
                return self._stokes[key]
        fluid = gen.ops.fluid
        q_u = fluid.interior_embed
        n_cells = fluid.divergence.shape[0]
        stiffness = q_u.T @ fluid.viscous @ q_u
        div = fluid.divergence @ q_u
        gauge = sp.csr_matrix(np.ones((n_cells, 1)))
        saddle = sp.bmat([[stiffness, div.T, None], [div, None, gauge], [None, gauge.T, None]], format="csc")
        lu = factorize(saddle, "Stokes saddle-point system")
        with self._lock:
            self._stokes[key] = lu
        return lu
    
    def stokes_solve(
        self,
        gen: Generator,
        rhs_u: np.ndarray,
        boundary_velocity: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Stationary Stokes: -L u + grad q = rhs on interior faces, div u = 0, prescribed boundary faces.
        
        Returns the full face velocity and the mean-zero pressure q.
        """
        fluid = gen.ops.fluid
        q_u = fluid.interior_embed
        n_int = q_u.shape[1]
        n_cells = fluid.divergence.shape[0]
        
        flux = fluid.divergence @ boundary_velocity
        net = abs(np.sum(flux))
        if net > FLUX_TOL * (np.sum(np.abs(flux)) + 1e-300):
            raise ConstraintError(
                f"Stokes boundary data has nonzero net flux ({net:.3e}); "
                f"the plate data must have zero mean over Omega"
            )
        forcing = -rhs_u - q_u.T @ (fluid.viscous @ boundary_velocity)
        dtype = complex if np.iscomplexobj(forcing) or np.iscomplexobj(flux) else float
        rhs = np.concatenate([forcing, -flux, np.zeros(1)]).astype(dtype)
        sol = solve_factorized(self._stokes_factor(gen), rhs)
        u_full = q_u @ sol[:n_int] + boundary_velocity
        return u_full, -sol[n_int:n_int + n_cells]
    
    def invert_at_zero(self, gen: Generator, proj: ProjectionP, data: State) -> ResolventSolution:
        """Solve A y = data by the four-step construction: plate velocity, Stokes, plate, projection."""
        ops = gen.ops
        fluid, plate = ops.fluid, ops.plate
        h = ops.topology.h
        
        # Step 1: plate velocity
        w2 = data.w1.copy()
        if abs(np.sum(w2)) > FLUX_TOL * (np.sum(np.abs(w2)) + 1e-300):
            raise ConstraintError("Compatibility violated: the plate data w1* must have zero mean over Omega")
        
        # Step 2: stationary Stokes with Omega data T w1*
        boundary = fluid.omega_trace.T @ (plate.to_faces @ w2)
        u_full, q0 = self.stokes_solve(gen, data.u[ops.topology.interior_faces], boundary)
        
        # Step 3: clamped plate problem for w1_hat
        traction = plate.to_faces.T @ (fluid.omega_trace @ (fluid.viscous @ u_full))
        q_top = fluid.omega_cells.T @ q0
        rhs = plate.to_faces.T @ q_top - h * traction - plate.p_rho @ data.w2
        w1_hat = solve_factorized(proj.bilaplacian_lu, rhs)
        
        # Step 4: mean-zero representative and the pressure constant
        coef = proj.coefficient(w1_hat)
        w1 = w1_hat - coef * proj.phi
        pi0 = q0 - coef
        
        y = State(u=u_full, w1=w1, w2=w2)
        diagnostics = self._constructive_diagnostics(gen, y, data, pi0)
        if not diagnostics.passed:
            logger.warning(
                f"Constructive inverse on {gen.grid_id} left residual {diagnostics.residual:.3e}, "
                f"pressure gap {diagnostics.pressure_gap:.3e}"
            )
        return ResolventSolution(
            beta=0.0,
            state=y,
            pressure=pi0,
            data=data,
            diagnostics=diagnostics,
            method="constructive",
            grid_id=gen.grid_id,
            rho=gen.rho,
        )
    
    def _constructive_diagnostics(self, gen: Generator, y: State, data: State, pi0: np.ndarray) -> ResolventDiagnostics:
        gs = self.generator_service
        ay = gs.apply_generator(gen, y)
        data_norm = gs.operator_service.energy_norm(data, gen.ops.metric)
        residual = gs.operator_service.energy_norm(ay.minus(data), gen.ops.metric)
        residual = residual / data_norm if data_norm > 0 else residual
        
        p_map = gs.pressure_service.pressure_from_state(gen.maps, y)
        p_scale = max(np.max(np.abs(pi0), initial=0.0), 1e-300)
        pressure_gap = float(np.max(np.abs(pi0 - p_map), initial=0.0) / p_scale) if np.any(pi0) else 0.0
        
        # A y = data gives 0 = w2 - w1* in the second row
        trace_gap = self._relative_max(y.w2 - data.w1, y.w2, data.w1)
        face_gap = self._relative_max(
            gen.ops.fluid.omega_trace @ y.u - gen.ops.plate.to_faces @ data.w1, y.w2, data.w1
        )
        diss = gs.dissipation(gen, y)
        work = -gs.operator_service.energy_inner_product(data, y, gen.ops.metric).real
        return ResolventDiagnostics(
            residual=float(residual),
            dissipation_gap=self._relative_gap(diss, work),
            trace_gap=trace_gap,
            face_trace_gap=face_gap,
            pressure_gap=pressure_gap,
            harmonic_residual=self._scaled_harmonic(gen, pi0),
            passed=bool(residual <= RESIDUAL_TOL and pressure_gap <= RESIDUAL_TOL),
        )
    
    def solve_resolvent(self, gen: Generator, beta: float, data: State) -> ResolventSolution:
        """Solve (i beta - A) y = data in reduced coordinates."""
        gs = self.generator_service
        z_star = gs.to_reduced(gen, data)
        shifted = 1j * beta * np.eye(gen.dim) - gen.a_red
        try:
            z = sla.lu_solve(sla.lu_factor(shifted), z_star)
        except (ValueError, sla.LinAlgError) as e:
            raise NumericalError(f"Resolvent solve at beta={beta} failed: {e}", {"beta": beta})
        
        growth = np.linalg.norm(z) / max(np.linalg.norm(z_star), 1e-300)
        if growth > SINGULAR_GROWTH:
            eigs = np.linalg.eigvals(gen.a_red)
            nearest = eigs[np.argmin(np.abs(eigs - 1j * beta))]
            raise NumericalError(
                f"Shift i*{beta} is numerically in the spectrum (nearest eigenvalue {nearest:.6e})",
                {"beta": beta, "nearest_real": float(nearest.real), "nearest_imag": float(nearest.imag)},
            )
        
        y = gs.from_reduced(gen, z)
        pi0 = gs.pressure_service.pressure_from_state(gen.maps, y)
        diagnostics = self._resolvent_diagnostics(gen, beta, y, data)
        diagnostics = diagnostics.model_copy(update={"harmonic_residual": self._scaled_harmonic(gen, pi0)})
        logger.debug(f"Resolvent at beta={beta}: residual {diagnostics.residual:.2e}")
        return ResolventSolution(
            beta=float(beta),
            state=y,
            pressure=pi0,
            data=data,
            diagnostics=diagnostics,
            method="reduced",
            grid_id=gen.grid_id,
            rho=gen.rho,
        )
    
    def _resolvent_diagnostics(self, gen: Generator, beta: float, y: State, data: State) -> ResolventDiagnostics:
        gs = self.generator_service
        metric = gen.ops.metric
        ay = gs.apply_generator(gen, y)
        lhs = y.scaled(1j * beta).minus(ay)
        data_norm = gs.operator_service.energy_norm(data, metric)
        residual = gs.operator_service.energy_norm(lhs.minus(data), metric)
        residual = residual / data_norm if data_norm > 0 else residual
        
        diss = gs.dissipation(gen, y)
        work = gs.operator_service.energy_inner_product(data, y, metric).real
        trace_gap = self._relative_max(1j * beta * y.w1 - y.w2 - data.w1, beta * y.w1, y.w2, data.w1)
        t = gen.ops.plate.to_faces
        face_gap = self._relative_max(
            1j * beta * (t @ y.w1) - gen.ops.fluid.omega_trace @ y.u - t @ data.w1,
            beta * y.w1,
            y.w2,
            data.w1,
        )
        return ResolventDiagnostics(
            residual=float(residual),
            dissipation_gap=self._relative_gap(diss, work),
            trace_gap=trace_gap,
            face_trace_gap=face_gap,
            passed=bool(residual <= RESIDUAL_TOL),
        )
    
    def auxiliary_lift_diagnostic(self, gen: Generator, sol: ResolventSolution) -> LiftReport:
        """Check (p, w1)_Omega = -i beta (u, psi) - (grad u, grad psi) + (u*, psi) with the Stokes lift psi of w1."""
        ops = gen.ops
        fluid, plate = ops.fluid, ops.plate
        w1 = sol.state.w1
        if abs(np.sum(w1)) > FLUX_TOL * (np.sum(np.abs(w1)) + 1e-300):
            raise ConstraintError("Lift needs a mean-zero plate displacement w1 over Omega")
        
        tw1 = plate.to_faces @ w1
        psi, _ = self.stokes_solve(
            gen, np.zeros(ops.topology.n_interior_faces, dtype=w1.dtype), fluid.omega_trace.T @ tw1
        )
        
        # A y = y* is (0 - A) y = -y*
        u_star = sol.data.u if sol.method == "reduced" else -sol.data.u
        u = sol.state.u
        idx = ops.topology.interior_faces
        vol = fluid.cell_volume
        lu_u = fluid.viscous @ u
        
        volume_side = (
            -1j * sol.beta * vol * np.vdot(psi[idx], u[idx])
            - vol * np.vdot(psi, lu_u)
            + vol * np.vdot(psi[idx], u_star[idx])
        )
        p_top = fluid.omega_cells.T @ sol.pressure
        pressure_side = plate.mass_weight * np.vdot(tw1, p_top)
        traction = vol * np.vdot(tw1, fluid.omega_trace @ lu_u)
        
        report = LiftReport(
            pressure_side_real=float(np.real(pressure_side)),
            pressure_side_imag=float(np.imag(pressure_side)),
            volume_side_real=float(np.real(volume_side)),
            volume_side_imag=float(np.imag(volume_side)),
            gap=float(abs(pressure_side - volume_side)),
            traction=float(abs(traction)),
            closure_gap=float(abs(pressure_side - volume_side - traction)),
            h=ops.topology.h,
        )
        logger.debug(f"Lift identity gap {report.gap:.3e} (traction {report.traction:.3e})")
        return report
    
    def diagnostics_row(self, sol: ResolventSolution, lift: Optional[LiftReport] = None) -> Dict[str, float]:
        """One CSV row: beta, residual, dissipation gap, trace gap, lift gap."""
        d = sol.diagnostics
        return {
            "beta": sol.beta,
            "residual": d.residual,
            "dissipation_gap": d.dissipation_gap,
            "trace_gap": d.trace_gap,
            "lift_gap": lift.gap if lift is not None else float("nan"),
        }
    
    def _scaled_harmonic(self, gen: Generator, p: np.ndarray) -> float:
        scale = np.max(np.abs(p), initial=0.0)
        if scale == 0:
            return 0.0
        res = self.generator_service.pressure_service.harmonic_residual(gen.maps, p)
        return float(res * gen.ops.topology.h ** 2 / scale)
    
    @staticmethod
    def _relative_gap(a: float, b: float) -> float:
        scale = max(abs(a), abs(b))
        return float(abs(a - b) / scale) if scale > 0 else 0.0
    
    @staticmethod
    def _relative_max(gap: np.ndarray, *refs: np.ndarray) -> float:
        scale = max(np.max(np.abs(r), initial=0.0) for r in refs)
        err = np.max(np.abs(gap), initial=0.0)
        return float(err / scale) if scale > 0 else float(err)
