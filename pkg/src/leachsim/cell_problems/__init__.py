"""Periodic cell problems on the voxelized unit cell."""

from .diffusion import DiffusionCellSolution, solve_diffusion_cell
from .elasticity import ElasticCellSolution, basis_diad, solve_elasticity_cell
from .stokes import StokesCellSolution, solve_stokes_cell

__all__ = [
    "DiffusionCellSolution",
    "ElasticCellSolution",
    "StokesCellSolution",
    "basis_diad",
    "solve_diffusion_cell",
    "solve_elasticity_cell",
    "solve_stokes_cell",
]
