from .geometry import (
    DimMode,
    BoundaryKind,
    GeometryConfig,
    GridTopology,
)
from .operators import (
    FluidOperators,
    PlateOperators,
    EnergyMetric,
    OperatorBundle,
)
from .state import State
from .pressure import RobinSolver, PressureMaps
from .generator import Generator
from .resolvent import (
    ProjectionP,
    ResolventDiagnostics,
    ResolventSolution,
    LiftReport,
)
from .spectral import SweepSample, DecayCertificate, SpectralReport
from .trajectory import (
    StepMethod,
    Formulation,
    FitMode,
    TrajectoryRecord,
    DecayFit,
)
from .control import (
    ControlKind,
    ObservationKind,
    CompatibilityPolicy,
    FluxReport,
    ControlSetup,
    RiccatiSolution,
    ControlReport,
)
from .run_config import (
    ExperimentKind,
    OutputFormat,
    GeometrySection,
    PhysicsSection,
    ControlSection,
    ExperimentSection,
    OutputSection,
    RunConfig,
)
from .run import RunStatus, RunProgress, RunRecord, ArtifactEntry, RunManifest
from .bench import BenchRecord, BenchReport

__all__ = [
    # Geometry
    "DimMode",
    "BoundaryKind",
    "GeometryConfig",
    "GridTopology",
    # Operators
    "FluidOperators",
    "PlateOperators",
    "EnergyMetric",
    "OperatorBundle",
    # States and pressure
    "State",
    "RobinSolver",
    "PressureMaps",
    "Generator",
    # Resolvent
    "ProjectionP",
    "ResolventDiagnostics",
    "ResolventSolution",
    "LiftReport",
    # Spectral
    "SweepSample",
    "DecayCertificate",
    "SpectralReport",
    # Time integration
    "StepMethod",
    "Formulation",
    "FitMode",
    "TrajectoryRecord",
    "DecayFit",
    # Control
    "ControlKind",
    "ObservationKind",
    "CompatibilityPolicy",
    "FluxReport",
    "ControlSetup",
    "RiccatiSolution",
    "ControlReport",
    # Runs
    "ExperimentKind",
    "OutputFormat",
    "GeometrySection",
    "PhysicsSection",
    "ControlSection",
    "ExperimentSection",
    "OutputSection",
    "RunConfig",
    "RunStatus",
    "RunProgress",
    "RunRecord",
    "ArtifactEntry",
    "RunManifest",
    "BenchRecord",
    "BenchReport",
]
