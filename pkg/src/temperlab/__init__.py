"""temperlab: a numerical laboratory for geometric-tempered Langevin dynamics."""

from .distributions import (
    GaussianSpec,
    GeometricPath,
    MixtureSpec,
    PotentialSpec,
    SmoothedUniformSpec,
    gaussian_geometric,
    make_bimodal_target,
    make_contaminated_target,
)
from .schedules import (
    Schedule,
    TemperatureLadder,
    constant_schedule,
    discretize,
    linear_schedule,
    optimal_schedule,
    piecewise_linear_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianSpec",
    "GeometricPath",
    "MixtureSpec",
    "PotentialSpec",
    "SmoothedUniformSpec",
    "Schedule",
    "TemperatureLadder",
    "constant_schedule",
    "discretize",
    "gaussian_geometric",
    "linear_schedule",
    "make_bimodal_target",
    "make_contaminated_target",
    "optimal_schedule",
    "piecewise_linear_schedule",
    "__version__",
]
