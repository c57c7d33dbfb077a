"""kschaos: particle, mean-field and Monte Carlo toolkit for the 1-D
parabolic-parabolic chemotaxis system with time-integrated singular interaction."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, InstabilityError, KschaosError, StateError
from .grids import DensityGrid, SpatialGrid, TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams, kernel_eval, kernel_lp_norm, kernel_time_integral

__all__ = [
    "__version__",
    "ConfigError", "DomainError", "InstabilityError", "KschaosError", "StateError",
    "DensityGrid", "SpatialGrid", "TimeGrid", "InitialLaw",
    "KernelParams", "kernel_eval", "kernel_lp_norm", "kernel_time_integral",
]
