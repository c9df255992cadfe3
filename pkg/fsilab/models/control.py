from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ControlKind(str, Enum):
    """Actuator type."""
    POINT_PLATE = "point_plate"
    BOUNDARY_NORMAL = "boundary_normal"


class ObservationKind(str, Enum):
    """What the cost observes."""
    IDENTITY = "identity"  # full energy
    PLATE = "plate"  # plate energy only


class CompatibilityPolicy(str, Enum):
    """Where the net boundary flux of the control is compensated."""
    SIGMA_OMEGA = "sigma_omega"  # uniformly over the patch and the interface
    OMEGA = "omega"  # entirely on the interface


class FluxReport(BaseModel):
    """Fluxes of the lifted control field for a unit control on one patch face."""
    policy: CompatibilityPolicy
    correction: float
    sigma_flux: float
    omega_flux: float


class ControlSetup(BaseModel):
    """Control operator B and observation R on reduced coordinates."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    kind: ControlKind
    grid_id: str
    rho: float
    b_red: np.ndarray  # reduced dim x controls
    observation: ObservationKind
    r_obs: np.ndarray  # observations x reduced dim
    
    # point control
    locations: List[List[float]] = Field(default_factory=list)
    weights: List[float] = Field(default_factory=list)
    nodes: List[int] = Field(default_factory=list)
    delta: Optional[np.ndarray] = None  # plate nodes x controls, scaled indicator before P^-1
    injection: Optional[np.ndarray] = None  # P^-1 (a delta)
    
    # boundary control
    sigma_faces: List[int] = Field(default_factory=list)
    lift: Optional[np.ndarray] = None  # faces x controls, lifted velocity fields
    flux: Optional[FluxReport] = None
    
    @property
    def n_controls(self) -> int:
        return int(self.b_red.shape[1])


class RiccatiSolution(BaseModel):
    """Riccati solution, feedback gain and closed-loop data."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
    
    p: np.ndarray
    gain: np.ndarray  # K = -B^T M P
    horizon: Optional[float] = None  # None for the infinite horizon
    residual: float
    residual_history: List[float] = Field(default_factory=list)
    open_abscissa: Optional[float] = None
    closed_abscissa: Optional[float] = None
    trace_times: List[float] = Field(default_factory=list)  # finite horizon: P-trace along the sweep
    trace_values: List[float] = Field(default_factory=list)


class ControlReport(BaseModel):
    """JSON summary of an LQR experiment."""
    kind: ControlKind
    grid_id: str
    rho: float
    reduced_dim: int
    horizon: Optional[float] = None
    are_residual: float
    residual_history: List[float] = Field(default_factory=list)
    open_abscissa: float
    closed_abscissa: float
    gain_norm: float
    krylov_rank: Optional[int] = None
    flux: Optional[FluxReport] = None
    costs: List[Dict[str, float]] = Field(default_factory=list)
    gain_table: List[Dict[str, Any]] = Field(default_factory=list)
