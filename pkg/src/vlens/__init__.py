"""Phase-space solver and verification suite for the 2D Vlasov-Poisson
system with a repulsive harmonic potential, organized around hyperbolic
lens coordinates."""

from .grids import DistributionGrid, NormReport, gaussian_grid, load_vlns, save_vlns
from .field import BumpKernel, ElectricField, solve_field
from .lens import LensChart
from .forward import SolverConfig, TrajectoryRecord, evolve, picard_lwp

__all__ = [
    "DistributionGrid", "NormReport", "gaussian_grid", "load_vlns", "save_vlns",
    "BumpKernel", "ElectricField", "solve_field",
    "LensChart",
    "SolverConfig", "TrajectoryRecord", "evolve", "picard_lwp",
]

__version__ = "0.1.0"
