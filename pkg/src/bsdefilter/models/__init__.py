from .base import GaussianPrior, JumpDiffusionModel, ObservationModel, Trajectory, log_likelihood, simulate_truth
from .benchmarks import example1_grid, example1_model, example2_grid, example2_model, kinematics_matrix
from .potential import (
    GriddedPotential,
    build_potential_lattice,
    lattice_function,
    potential_grid,
    potential_surface_model,
)

__all__ = [
    "GaussianPrior",
    "JumpDiffusionModel",
    "ObservationModel",
    "Trajectory",
    "log_likelihood",
    "simulate_truth",
    "example1_grid",
    "example1_model",
    "example2_grid",
    "example2_model",
    "kinematics_matrix",
    "GriddedPotential",
    "build_potential_lattice",
    "lattice_function",
    "potential_grid",
    "potential_surface_model",
]
