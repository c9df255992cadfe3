try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, Field, model_validator

from .control import CompatibilityPolicy, ControlKind, ObservationKind
from .geometry import DimMode, GeometryConfig
from .trajectory import FitMode, Formulation, StepMethod

DEFAULT_SEED = 20240101
DENSE_THRESHOLD = 1500


class ExperimentKind(str, Enum):
    """Experiments a run can execute."""
    SIMULATE = "simulate"
    SPECTRUM = "spectrum"
    SWEEP = "sweep"
    INVERT = "invert"
    LQR = "lqr"
    VALIDATE = "validate"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class GeometrySection(BaseModel):
    dim_mode: DimMode = DimMode.ANALOGUE2D
    n: int = Field(8, ge=2, description="Cells per direction")
    
    def to_geometry(self) -> GeometryConfig:
        return GeometryConfig(dim_mode=self.dim_mode, n=self.n)


class PhysicsSection(BaseModel):
    rho: float = Field(0.0, ge=0.0, description="Rotational inertia; 0 is the Euler-Bernoulli plate")


class ControlSection(BaseModel):
    """Control setup for the lqr experiment."""
    kind: ControlKind = ControlKind.POINT_PLATE
    locations: List[List[float]] = Field(default_factory=lambda: [[0.5]])
    weights: Optional[List[float]] = None
    sigma_faces: Optional[List[int]] = None  # default: the floor of the cavity
    policy: CompatibilityPolicy = CompatibilityPolicy.SIGMA_OMEGA
    observation: ObservationKind = ObservationKind.IDENTITY
    horizon: Optional[float] = Field(None, gt=0.0)
    cost_samples: int = Field(5, ge=0)
    cost_time: float = Field(20.0, gt=0.0)
    gain_grids: List[int] = Field(default_factory=list)


class ExperimentSection(BaseModel):
    kind: ExperimentKind = ExperimentKind.VALIDATE
    seed: int = DEFAULT_SEED
    dense_threshold: int = Field(DENSE_THRESHOLD, ge=1, description="Largest reduced dimension handled densely")
    
    # simulate
    t_final: float = Field(2.0, gt=0.0)
    dt: Optional[float] = None
    method: StepMethod = StepMethod.MIDPOINT
    formulation: Formulation = Formulation.REDUCED
    snapshot_every: int = Field(0, ge=0)
    fit_mode: FitMode = FitMode.EXPONENTIAL
    fit_window: List[float] = Field(default_factory=lambda: [0.2, 1.0])
    
    # spectrum / sweep
    eigen_k: Union[int, str] = "all"
    beta_max: Optional[float] = Field(None, gt=0.0)
    betas: Optional[List[float]] = None
    refine: bool = True
    certify: bool = True
    
    # invert
    samples: int = Field(10, ge=1)
    invert_betas: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 5.0, 20.0])
    
    control: ControlSection = Field(default_factory=ControlSection)
    
    @model_validator(mode="after")
    def _check_consistency(self):
        if self.dt is not None and self.dt == 0.0:
            raise ValueError("dt must be nonzero")
        if len(self.fit_window) != 2 or not 0.0 <= self.fit_window[0] < self.fit_window[1] <= 1.0:
            raise ValueError("fit_window must be [start, end] with 0 <= start < end <= 1")
        if isinstance(self.eigen_k, str) and self.eigen_k != "all":
            raise ValueError("eigen_k must be a positive integer or 'all'")
        if isinstance(self.eigen_k, int) and self.eigen_k < 1:
            raise ValueError("eigen_k must be a positive integer or 'all'")
        return self


class OutputSection(BaseModel):
    directory: Optional[Path] = None  # falls back to settings.output_dir
    formats: List[OutputFormat] = Field(default_factory=lambda: [OutputFormat.JSON, OutputFormat.CSV])


class RunConfig(BaseModel):
    """A run is fully determined by this configuration and its seed."""
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    output: OutputSection = Field(default_factory=OutputSection)
    
    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "RunConfig":
        """Parse and validate a TOML run file."""
        with open(path, "rb") as f:
            data = tomllib.load(f)
        return cls.model_validate(data)
