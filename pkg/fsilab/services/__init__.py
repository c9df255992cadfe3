from .geometry_grid import GridService
from .discrete_operators import OperatorService
from .pressure_harmonic import PressureService
from .generator import GeneratorService
from .stationary_resolvent import ResolventService
from .spectral_analysis import SpectralService
from .semigroup_sim import SimulationService
from .lqr_control import ControlService
from .run_service import RunService
from .experiment_service import ExperimentService
from .bench_service import BenchService

__all__ = [
    "GridService",
    "OperatorService",
    "PressureService",
    "GeneratorService",
    "ResolventService",
    "SpectralService",
    "SimulationService",
    "ControlService",
    "RunService",
    "ExperimentService",
    "BenchService",
]
