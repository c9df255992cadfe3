import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from ..exceptions import ConfigurationError, NumericalError
from ..models.control import (
    CompatibilityPolicy,
    ControlKind,
    ControlSetup,
    FluxReport,
    ObservationKind,
    RiccatiSolution,
)
from ..models.generator import Generator
from ..models.geometry import S_CODE
from .generator import GeneratorService
from .stationary_resolvent import ResolventService

logger = logging.getLogger(__name__)

ARE_TOL = 1e-8
NEWTON_MAX_ITER = 50
KRYLOV_TOL = 1e-12


def solve_riccati(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    horizon: Optional[float] = None,
    steps: Optional[int] = None,
) -> RiccatiSolution:
    """LQR Riccati solution for x' = a x + b g with cost int x^T q x + |g|^2.
    
    Infinite horizon: algebraic Riccati equation refined by Newton-Kleinman.
    Finite horizon: backward implicit-midpoint sweep of the Riccati ODE from P(T) = 0.
    b = 0 reduces to the observability Lyapunov equation.
    """
    n = a.shape[0]
    q = 0.5 * (q + q.T)
    q_norm = max(np.linalg.norm(q), 1e-300)
    
    def residual_of(p):
        return a.T @ p + p @ a - p @ b @ b.T @ p + q
    
    if not np.any(b):
        if horizon is not None:
            raise ValueError("Finite-horizon sweep needs a nonzero control operator")
        p = sla.solve_continuous_lyapunov(a.T, -q)
        p = 0.5 * (p + p.T)
        res = float(np.linalg.norm(residual_of(p)) / q_norm)
        return RiccatiSolution(p=p, gain=np.zeros_like(b.T), residual=res, residual_history=[res])
    
    if horizon is None:
        try:
            p = sla.solve_continuous_are(a, b, q, np.eye(b.shape[1]))
        except (ValueError, np.linalg.LinAlgError) as e:
            raise NumericalError(f"Algebraic Riccati solve failed: {e}", {"dim": n})
        p = 0.5 * (p + p.T)
        history = [float(np.linalg.norm(residual_of(p)) / q_norm)]
        it = 0
        while history[-1] > ARE_TOL and it < NEWTON_MAX_ITER:
            k = b.T @ p
            closed = a - b @ k
            p = sla.solve_continuous_lyapunov(closed.T, -(q + k.T @ k))
            p = 0.5 * (p + p.T)
            history.append(float(np.linalg.norm(residual_of(p)) / q_norm))
            it += 1
        if history[-1] > ARE_TOL:
            raise NumericalError(
                f"Riccati residual {history[-1]:.3e} above {ARE_TOL:.0e} after {it} Newton steps",
                {"residual_history": history},
            )
        if it:
            logger.warning(f"Riccati solution needed {it} Newton-Kleinman refinement steps")
        return RiccatiSolution(p=p, gain=-b.T @ p, residual=history[-1], residual_history=history)
    
    if horizon <= 0:
        raise ValueError("Horizon must be positive")
    a_norm = np.linalg.norm(a, 2)
    steps = steps or max(200, math.ceil(horizon * a_norm))
    ds = horizon / steps
    p = np.zeros((n, n))
    bbt = b @ b.T
    times, traces = [horizon], [0.0]
    history: List[float] = []
    for k in range(1, steps + 1):
        # X = midpoint value: X - ds/2 F(X) = P_k, F the Riccati right-hand side
        x = p.copy()
        for _ in range(NEWTON_MAX_ITER):
            g = x - 0.5 * ds * residual_of(x) - p
            g_norm = np.linalg.norm(g)
            if g_norm <= 1e-11 * max(np.linalg.norm(x), q_norm * ds):
                break
            shifted = a - bbt @ x - np.eye(n) / ds
            delta = sla.solve_continuous_lyapunov(shifted.T, (2.0 / ds) * g)
            x = x + 0.5 * (delta + delta.T)
        else:
            raise NumericalError(
                f"Finite-horizon Newton iteration stalled at step {k}", {"step": k, "residual": float(g_norm)}
            )
        p = 2.0 * x - p
        p = 0.5 * (p + p.T)
        times.append(horizon - k * ds)
        traces.append(float(np.trace(p)))
    res = float(np.linalg.norm(residual_of(p)) / q_norm)
    history.append(res)
    return RiccatiSolution(
        p=p,
        gain=-b.T @ p,
        horizon=horizon,
        residual=res,
        residual_history=history,
        trace_times=times,
        trace_values=traces,
    )


class ControlService:
    """Service for the point and boundary LQR control setups."""
    
    def __init__(
        self,
        generator_service: Optional[GeneratorService] = None,
        resolvent_service: Optional[ResolventService] = None,
    ):
        self.generator_service = generator_service or GeneratorService()
        self.resolvent_service = resolvent_service or ResolventService(self.generator_service)
    
    def observation_matrix(self, gen: Generator, kind: ObservationKind) -> np.ndarray:
        """R with ||R z||^2 the full energy (identity) or the plate energy only."""
        if kind == ObservationKind.IDENTITY:
            return np.eye(gen.dim)
        plate = gen.ops.plate
        n_int, m = gen.n_interior, gen.n_plate
        mass = np.block(
            [
                [plate.mass_weight * plate.bilaplacian.toarray(), np.zeros((m, m))],
                [np.zeros((m, m)), plate.mass_weight * plate.p_rho.toarray()],
            ]
        )
        chol = sla.cholesky(mass, lower=True)
        return chol.T @ gen.basis[n_int:]
    
    def build_point_control(
        self,
        gen: Generator,
        locations: Sequence[Sequence[float]],
        weights: Optional[Sequence[float]] = None,
        observation: ObservationKind = ObservationKind.IDENTITY,
    ) -> ControlSetup:
        """Point forces sum_j a_j g_j delta_xi_j on the plate, delta as a scaled nearest-node indicator."""
        topology = gen.ops.topology
        plate = gen.ops.plate
        plate_dim = topology.plate_dim
        if not locations:
            raise ConfigurationError("Point control needs at least one location")
        weights = list(weights) if weights is not None else [1.0] * len(locations)
        if len(weights) != len(locations):
            raise ConfigurationError("Point control needs one weight per location")
        
        coords = topology.plate_nodes[:, :plate_dim]
        scale = 1.0 / topology.h ** plate_dim
        delta = np.zeros((topology.n_plate, len(locations)))
        nodes = []
        for j, (xi, a) in enumerate(zip(locations, weights)):
            xi = np.asarray(xi, dtype=float)
            if xi.shape != (plate_dim,) or np.any(xi <= 0.0) or np.any(xi >= 1.0):
                raise ConfigurationError(f"Control point {xi.tolist()} is not strictly inside Omega")
            node = int(np.argmin(np.linalg.norm(coords - xi, axis=1)))
            nodes.append(node)
            delta[node, j] = a * scale
        
        injection = np.column_stack(
            [self.generator_service.pressure_service.inertia_solve(gen.maps, col) for col in delta.T]
        )
        n_int, m = gen.n_interior, gen.n_plate
        # Energy-weighted forcing [0; 0; h^(d-1) a delta]
        forcing = np.zeros((gen.n_coordinates, delta.shape[1]))
        forcing[n_int + m:] = plate.mass_weight * delta
        b_red = gen.basis.T @ forcing
        
        logger.info(f"Point control on {gen.grid_id}: {len(locations)} actuators at nodes {nodes}")
        return ControlSetup(
            kind=ControlKind.POINT_PLATE,
            grid_id=gen.grid_id,
            rho=gen.rho,
            b_red=b_red,
            observation=observation,
            r_obs=self.observation_matrix(gen, observation),
            locations=[list(map(float, x)) for x in locations],
            weights=[float(a) for a in weights],
            nodes=nodes,
            delta=delta,
            injection=injection,
        )
    
    def build_boundary_control(
        self,
        gen: Generator,
        sigma_faces: Sequence[int],
        policy: CompatibilityPolicy = CompatibilityPolicy.SIGMA_OMEGA,
        observation: ObservationKind = ObservationKind.IDENTITY,
    ) -> ControlSetup:
        """Normal-velocity control on a patch of S, lifted into the fluid by stationary Stokes."""
        topology = gen.ops.topology
        fluid = gen.ops.fluid
        sigma = [int(f) for f in sigma_faces]
        if not sigma:
            raise ConfigurationError("Boundary control patch must not be empty")
        for f in sigma:
            if not 0 <= f < topology.n_faces or topology.face_kind[f] != S_CODE:
                raise ConfigurationError(f"Face {f} is not an S face; the control patch must avoid Omega")
        if len(set(sigma)) != len(sigma):
            raise ConfigurationError("Boundary control patch lists a face twice")
        
        n_sigma, n_omega = len(sigma), topology.n_omega
        area = topology.h ** (topology.dim - 1)
        if policy == CompatibilityPolicy.SIGMA_OMEGA:
            correction = 1.0 / (n_sigma + n_omega)
            sigma_shift, omega_value = correction, -correction
        else:
            correction = 1.0 / n_omega
            sigma_shift, omega_value = 0.0, -correction
        
        lifts = np.zeros((topology.n_faces, n_sigma))
        zeros = np.zeros(topology.n_interior_faces)
        for j, face in enumerate(sigma):
            normal = -sigma_shift * np.ones(n_sigma)
            normal[j] += 1.0
            boundary = np.zeros(topology.n_faces)
            boundary[sigma] = topology.outward_sign[sigma] * normal
            boundary[topology.omega_faces] = omega_value
            lifts[:, j], _ = self.resolvent_service.stokes_solve(gen, zeros, boundary)
        
        # Viscous force of the lifted field on the coordinates
        forcing = -(gen.lift.T @ (fluid.viscous @ lifts)) * fluid.cell_volume
        b_red = gen.basis.T @ forcing
        
        first = lifts[:, 0]
        flux = FluxReport(
            policy=policy,
            correction=float(correction),
            sigma_flux=float(area * np.sum(topology.outward_sign[sigma] * first[sigma])),
            omega_flux=float(area * np.sum(first[topology.omega_faces])),
        )
        logger.info(
            f"Boundary control on {gen.grid_id}: {n_sigma} faces, policy {policy.value}, "
            f"sigma flux {flux.sigma_flux:.3e}, omega flux {flux.omega_flux:.3e}"
        )
        return ControlSetup(
            kind=ControlKind.BOUNDARY_NORMAL,
            grid_id=gen.grid_id,
            rho=gen.rho,
            b_red=b_red,
            observation=observation,
            r_obs=self.observation_matrix(gen, observation),
            sigma_faces=sigma,
            lift=lifts,
            flux=flux,
        )
    
    @staticmethod
    def default_patch(gen: Generator) -> List[int]:
        """S faces on the floor of the cavity, opposite the plate."""
        topology = gen.ops.topology
        axis = topology.dim - 1
        faces = topology.s_faces
        floor = (topology.face_axis[faces] == axis) & (topology.face_centers[faces, axis] == 0.0)
        return [int(f) for f in faces[floor]]
    
    def inject(self, setup: ControlSetup, g: np.ndarray) -> np.ndarray:
        """B g in reduced coordinates."""
        return setup.b_red @ g
    
    def adjoint(self, setup: ControlSetup, z: np.ndarray) -> np.ndarray:
        """B* z for the energy product on states and the Euclidean product on controls."""
        return setup.b_red.conj().T @ z
    
    def krylov_rank(self, gen: Generator, setup: ControlSetup, tol: float = KRYLOV_TOL) -> int:
        """Dimension of span{B, AB, A^2 B, ...} by block Arnoldi with reorthogonalization."""
        a = gen.a_red
        threshold = tol * max(np.linalg.norm(a, 2), 1.0)
        basis: List[np.ndarray] = []
        
        def absorb(v) -> bool:
            for _ in range(2):
                for q in basis:
                    v = v - np.dot(q, v) * q
            norm = np.linalg.norm(v)
            if norm <= threshold:
                return False
            basis.append(v / norm)
            return True
        
        block = []
        for col in setup.b_red.T:
            if absorb(col.astype(float)):
                block.append(basis[-1])
        while block and len(basis) < gen.dim:
            block = [basis[-1] for v in block if absorb(a @ v)]
        return len(basis)
    
    def solve_lqr(self, gen: Generator, setup: ControlSetup, horizon: Optional[float] = None) -> RiccatiSolution:
        """Riccati synthesis for the setup; reports open- and closed-loop abscissae."""
        a = gen.a_red
        open_abscissa = float(np.max(np.linalg.eigvals(a).real))
        if horizon is None and open_abscissa >= 0:
            logger.warning(f"Open loop on {gen.grid_id} is not stable (abscissa {open_abscissa:.3e})")
        q = setup.r_obs.T @ setup.r_obs
        sol = solve_riccati(a, setup.b_red, q, horizon)
        closed = float(np.max(np.linalg.eigvals(a + setup.b_red @ sol.gain).real))
        if closed > open_abscissa + 1e-10:
            logger.warning(f"Closed-loop abscissa {closed:.6e} exceeds open loop {open_abscissa:.6e}")
        logger.info(
            f"LQR on {gen.grid_id}: residual {sol.residual:.2e}, abscissa {open_abscissa:.4e} -> {closed:.4e}"
        )
        return sol.model_copy(update={"open_abscissa": open_abscissa, "closed_abscissa": closed})
    
    def quadratic_costs(self, gen: Generator, setup: ControlSetup, sol: RiccatiSolution, z0: np.ndarray) -> Dict[str, float]:
        """Infinite-horizon costs from z0: optimal feedback (z0^T P z0) and zero control (observability Gramian)."""
        q = setup.r_obs.T @ setup.r_obs
        gramian = sla.solve_continuous_lyapunov(gen.a_red.T, -q)
        return {
            "closed_loop": float(np.real(np.vdot(z0, sol.p @ z0))),
            "open_loop": float(np.real(np.vdot(z0, gramian @ z0))),
        }
    
    def simulate_cost(
        self,
        gen: Generator,
        setup: ControlSetup,
        gain: Optional[np.ndarray],
        z0: np.ndarray,
        t_final: float,
        dt: float,
    ) -> float:
        """int_0^T |R z|^2 + |g|^2 along the implicit-midpoint trajectory with g = K z (or g = 0)."""
        a = gen.a_red if gain is None else gen.a_red + setup.b_red @ gain
        steps = max(1, math.ceil(t_final / dt - 1e-9))
        dt = t_final / steps
        lu = sla.lu_factor(np.eye(gen.dim) - 0.5 * dt * a)
        weight = setup.r_obs.T @ setup.r_obs
        if gain is not None:
            weight = weight + gain.T @ gain
        z = np.asarray(z0, dtype=float)
        cost = 0.0
        for _ in range(steps):
            z_new = sla.lu_solve(lu, z + 0.5 * dt * (a @ z))
            mid = 0.5 * (z + z_new)
            cost += dt * float(mid @ weight @ mid)
            z = z_new
        return cost
    
    def gain_table(
        self,
        geometries: Sequence[Any],
        rho: float,
        locations: Sequence[Sequence[float]],
        weights: Optional[Sequence[float]] = None,
    ) -> List[Dict[str, Any]]:
        """Gain norm of the infinite-horizon point-control LQR for each grid."""
        rows = []
        for geometry in geometries:
            gen = self.generator_service.build(geometry, rho)
            setup = self.build_point_control(gen, locations, weights)
            sol = self.solve_lqr(gen, setup)
            rows.append(
                {
                    "grid": gen.grid_id,
                    "h": gen.ops.topology.h,
                    "gain_norm": float(np.linalg.norm(sol.gain, 2)),
                    "are_residual": sol.residual,
                }
            )
        return rows
