"""Gaussian-process learning of distributed port-Hamiltonian systems.

The Hamiltonian of a spatially discretized PDE is given a GP prior; the
structure operators (skew interconnection, dissipation, boundary ports)
enter the kernel, so every posterior draw is a port-Hamiltonian model.
"""

from .config import RunConfig, load_config
from .grid import SpatialGrid, StackedState, Trajectory, make_grid
from .model import TrainedModel, posterior_grad_h, posterior_vector_field, sample_hamiltonian, train
from .model_io import load_model, save_model
from .operators import check_skew, diff_matrix_sbp, string_structure
from .pipeline import build_dataset, fit_field_gps
from .solver import integrate, simulate_string

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "SpatialGrid",
    "StackedState",
    "Trajectory",
    "TrainedModel",
    "build_dataset",
    "check_skew",
    "diff_matrix_sbp",
    "fit_field_gps",
    "integrate",
    "load_config",
    "load_model",
    "make_grid",
    "posterior_grad_h",
    "posterior_vector_field",
    "sample_hamiltonian",
    "save_model",
    "simulate_string",
    "string_structure",
    "train",
]
