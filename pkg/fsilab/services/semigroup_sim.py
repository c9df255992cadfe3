import logging
import math
import threading
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..exceptions import NumericalError
from ..models.generator import Generator
from ..models.state import State
from ..models.trajectory import DecayFit, FitMode, Formulation, StepMethod, TrajectoryRecord
from .generator import GeneratorService
from .linear_solvers import factorize, solve_factorized

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 20
ENERGY_FLOOR = 1e-13
STEP_PHASE = 0.3


class SimulationService:
    """Service integrating the contraction semigroup in time."""
    
    def __init__(self, generator_service: Optional[GeneratorService] = None):
        self.generator_service = generator_service or GeneratorService()
        self._factors: Dict[Tuple, object] = {}
        self._dissipation: Dict[Tuple, np.ndarray] = {}
        self._lock = threading.Lock()
    
    def default_dt(self, gen: Generator) -> float:
        """min(h^2 / 4, STEP_PHASE / ||A||_2): no mode turns through more than STEP_PHASE radians per step."""
        key = ("norm", gen.grid_id, gen.rho)
        with self._lock:
            norm = self._factors.get(key)
        if norm is None:
            norm = float(np.linalg.norm(gen.a_red, 2))
            with self._lock:
                self._factors[key] = norm
        dt = gen.ops.topology.h ** 2 / 4.0
        if norm > 0.0:
            dt = min(dt, STEP_PHASE / norm)
        return dt
    
    def _reduced_factor(self, gen: Generator, dt: float, method: StepMethod):
        key = ("reduced", gen.grid_id, gen.rho, dt, method)
        with self._lock:
            if key in self._factors:
                return self._factors[key]
        theta = 0.5 if method == StepMethod.MIDPOINT else 1.0
        try:
            lu = sla.lu_factor(np.eye(gen.dim) - theta * dt * gen.a_red)
        except (ValueError, sla.LinAlgError) as e:
            raise NumericalError(f"Step factorization failed: {e}", {"dt": dt, "method": method.value})
        with self._lock:
            self._factors[key] = lu
        return lu
    
    def _dae_factor(self, gen: Generator, dt: float, method: StepMethod):
        key = ("dae", gen.grid_id, gen.rho, dt, method)
        with self._lock:
            if key in self._factors:
                return self._factors[key]
        theta = 0.5 if method == StepMethod.MIDPOINT else 1.0
        vol = gen.ops.fluid.cell_volume
        c_div = (gen.ops.fluid.divergence @ gen.lift).tocsr()
        saddle = sp.bmat(
            [
                [gen.coord_mass - theta * dt * gen.forcing, -dt * vol * c_div.T],
                [c_div, None],
            ],
            format="csc",
        )
        lu = factorize(saddle, "time-step saddle-point system")
        with self._lock:
            self._factors[key] = lu
        return lu
    
    def dissipation_matrix(self, gen: Generator) -> np.ndarray:
        """Reduced form of ||grad u||^2 = z^H D z."""
        key = (gen.grid_id, gen.rho)
        with self._lock:
            if key in self._dissipation:
                return self._dissipation[key]
        fluid = gen.ops.fluid
        lifted = gen.lift @ gen.basis
        dmat = fluid.cell_volume * (lifted.T @ (fluid.viscous @ lifted))
        dmat = 0.5 * (dmat + dmat.T)
        with self._lock:
            self._dissipation[key] = dmat
        return dmat
    
    def step_reduced(self, gen: Generator, z: np.ndarray, dt: float, method: StepMethod = StepMethod.MIDPOINT) -> np.ndarray:
        """One step on reduced coordinates."""
        if dt == 0:
            raise ValueError("Time step must be nonzero")
        lu = self._reduced_factor(gen, dt, method)
        rhs = z + 0.5 * dt * (gen.a_red @ z) if method == StepMethod.MIDPOINT else z
        return sla.lu_solve(lu, rhs)
    
    def step_dae(
        self,
        gen: Generator,
        x: np.ndarray,
        dt: float,
        method: StepMethod = StepMethod.MIDPOINT,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """One step of the saddle-point system; returns new coordinates and the pressure multiplier.
        
        For the midpoint rule the multiplier is the pressure at the half step.
        """
        if dt == 0:
            raise ValueError("Time step must be nonzero")
        lu = self._dae_factor(gen, dt, method)
        mx = gen.coord_mass @ x
        rhs_top = mx + 0.5 * dt * (gen.forcing @ x) if method == StepMethod.MIDPOINT else mx
        n_cells = gen.ops.topology.n_cells
        rhs = np.concatenate([rhs_top, np.zeros(n_cells, dtype=rhs_top.dtype)])
        sol = solve_factorized(lu, rhs)
        return sol[:gen.n_coordinates], sol[gen.n_coordinates:]
    
    def step(
        self,
        gen: Generator,
        y: State,
        dt: float,
        method: StepMethod = StepMethod.MIDPOINT,
        formulation: Formulation = Formulation.REDUCED,
    ) -> State:
        """Advance a constrained state by dt (negative dt steps backwards)."""
        gs = self.generator_service
        if formulation == Formulation.REDUCED:
            return gs.from_reduced(gen, self.step_reduced(gen, gs.to_reduced(gen, y), dt, method))
        x_new, _ = self.step_dae(gen, gs.to_coordinates(gen, y), dt, method)
        return gs.from_coordinates(gen, x_new)
    
    def simulate(
        self,
        gen: Generator,
        y0: Union[State, np.ndarray],
        t_final: float,
        dt: Optional[float] = None,
        snapshot_every: int = 0,
        method: StepMethod = StepMethod.MIDPOINT,
        formulation: Formulation = Formulation.REDUCED,
    ) -> TrajectoryRecord:
        """Integrate from y0 (a State or reduced coordinates) to t_final."""
        if t_final <= 0:
            raise ValueError("t_final must be positive")
        dt = dt if dt is not None else self.default_dt(gen)
        if dt <= 0:
            raise ValueError("dt must be positive")
        steps = max(1, math.ceil(t_final / dt - 1e-9))
        dt = t_final / steps
        
        gs = self.generator_service
        z = gs.to_reduced(gen, y0) if isinstance(y0, State) else np.asarray(y0)
        dmat = self.dissipation_matrix(gen)
        m, n_int = gen.n_plate, gen.n_interior
        mean_row = gen.basis[n_int:n_int + m].mean(axis=0)
        
        if formulation == Formulation.DAE:
            x = gen.basis @ z
        
        def energy(v):
            return 0.5 * float(np.real(np.vdot(v, v)))
        
        times, energies, diss, means = [0.0], [energy(z)], [0.0], [float(np.real(mean_row @ z))]
        snapshots, snap_times = [], []
        if snapshot_every:
            snapshots.append(z.copy())
            snap_times.append(0.0)
        
        total = 0.0
        for k in range(1, steps + 1):
            if formulation == Formulation.REDUCED:
                z_new = self.step_reduced(gen, z, dt, method)
            else:
                x, _ = self.step_dae(gen, x, dt, method)
                z_new = gen.basis.T @ (gen.coord_mass @ x)
            
            z_eval = 0.5 * (z + z_new) if method == StepMethod.MIDPOINT else z_new
            total += dt * float(np.real(np.vdot(z_eval, dmat @ z_eval)))
            z = z_new
            
            times.append(k * dt)
            energies.append(energy(z))
            diss.append(total)
            means.append(float(np.real(mean_row @ z)))
            if snapshot_every and k % snapshot_every == 0:
                snapshots.append(z.copy())
                snap_times.append(k * dt)
        
        record = TrajectoryRecord(
            grid_id=gen.grid_id,
            rho=gen.rho,
            dt=dt,
            method=method,
            formulation=formulation,
            times=times,
            energies=energies,
            dissipation=diss,
            mean_w1=means,
            snapshots=snapshots,
            snapshot_times=snap_times,
        )
        logger.info(
            f"Simulated {gen.grid_id}, rho={gen.rho}: {steps} {method.value} steps, "
            f"E(T)/E(0)={energies[-1] / max(energies[0], 1e-300):.3e}, balance gap {record.energy_balance_gap:.2e}"
        )
        return record
    
    def fit_decay(
        self,
        record: TrajectoryRecord,
        mode: FitMode = FitMode.EXPONENTIAL,
        window: Tuple[float, float] = (0.2, 1.0),
    ) -> DecayFit:
        """Fit the tail [window[0] T, window[1] T] of E(t); RATIONAL also reports sup t E(t) over [0, T]."""
        t = np.asarray(record.times)
        e = np.asarray(record.energies)
        t_end = t[-1]
        start, stop = window[0] * t_end, window[1] * t_end
        usable = (t >= start) & (t <= stop) & (e > ENERGY_FLOOR * e[0])
        count = int(np.count_nonzero(usable))
        if count < MIN_FIT_SAMPLES:
            raise NumericalError(
                f"Fit window [{start:.3g}, {stop:.3g}] has {count} usable samples, need {MIN_FIT_SAMPLES}",
                {"usable": count, "required": MIN_FIT_SAMPLES},
            )
        tw, ew = t[usable], e[usable]
        
        slope, intercept = np.polyfit(tw, np.log(ew), 1)
        predicted = slope * tw + intercept
        log_e = np.log(ew)
        ss_res = float(np.sum((log_e - predicted) ** 2))
        ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        prefactor = float(np.exp(intercept))
        
        fit = DecayFit(
            mode=mode,
            window_start=float(start),
            window_end=float(stop),
            samples=count,
            omega_fit=float(-slope),
            prefactor=prefactor,
            overshoot=float(np.sqrt(prefactor / e[0])),
            r_squared=r_squared,
        )
        if mode == FitMode.RATIONAL:
            # sup over the whole trajectory, the fit window only sets the rate
            te = t * e
            peak = int(np.argmax(te))
            fit = fit.model_copy(update={"sup_t_energy": float(te[peak]), "bounded": bool(peak < te.size - 1)})
        logger.debug(f"Decay fit ({mode.value}): omega={fit.omega_fit:.6e}, R^2={fit.r_squared:.6f}")
        return fit
    
    def pressure_cross_check(self, gen: Generator, y: State, dt: float) -> Dict[str, float]:
        """Compare the saddle-point multiplier with the G-map pressure at the half step and at the new state."""
        gs = self.generator_service
        ps = gs.pressure_service
        x = gs.to_coordinates(gen, y)
        x_new, p_mid = self.step_dae(gen, x, dt, StepMethod.MIDPOINT)
        y_new = gs.from_coordinates(gen, x_new)
        y_mid = gs.from_coordinates(gen, 0.5 * (x + x_new))
        
        p_at_mid = ps.pressure_from_state(gen.maps, y_mid)
        p_at_end = ps.pressure_from_state(gen.maps, y_new)
        scale_mid = max(ps.l2_norm(gen.maps, p_at_mid), 1e-300)
        scale_end = max(ps.l2_norm(gen.maps, p_at_end), 1e-300)
        return {
            "midpoint_gap": ps.l2_norm(gen.maps, p_mid - p_at_mid) / scale_mid,
            "endpoint_gap": ps.l2_norm(gen.maps, p_mid - p_at_end) / scale_end,
        }
