from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, Field


class StepMethod(str, Enum):
    """Time integrator."""
    MIDPOINT = "midpoint"
    BACKWARD_EULER = "backward_euler"


class Formulation(str, Enum):
    """Pressure-eliminated reduced system or saddle-point system with pressure multiplier."""
    REDUCED = "reduced"
    DAE = "dae"


class FitMode(str, Enum):
    EXPONENTIAL = "exponential"
    RATIONAL = "rational"


class TrajectoryRecord(BaseModel):
    """Energy history of one simulated trajectory."""
    grid_id: str
    rho: float
    dt: float
    method: StepMethod
    formulation: Formulation
    times: List[float]
    energies: List[float]  # E = 1/2 ||y||^2
    dissipation: List[float]  # cumulative dt * ||grad u||^2
    mean_w1: List[float]
    snapshots: List[Any] = Field(default_factory=list, exclude=True)
    snapshot_times: List[float] = Field(default_factory=list)
    
    @property
    def energy_balance_gap(self) -> float:
        """max_k |E(0) - E(t_k) - D(t_k)| / E(0)."""
        e0 = self.energies[0]
        if e0 == 0:
            return 0.0
        return max(abs(e0 - e - d) for e, d in zip(self.energies, self.dissipation)) / e0
    
    @property
    def mean_drift(self) -> float:
        return max(abs(m - self.mean_w1[0]) for m in self.mean_w1)


class DecayFit(BaseModel):
    """Least-squares decay fit of a trajectory tail."""
    mode: FitMode
    window_start: float
    window_end: float
    samples: int
    omega_fit: Optional[float] = None  # energy decay rate, E ~ C e^{-omega t}
    prefactor: Optional[float] = None  # C
    overshoot: Optional[float] = None  # M_fit = sqrt(C / E(0))
    r_squared: Optional[float] = None
    sup_t_energy: Optional[float] = None  # sup t E(t) over [0, T]
    bounded: Optional[bool] = None  # t E(t) not growing at the end of the window
