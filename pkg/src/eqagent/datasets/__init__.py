"""Benchmark data generation, perturbation, storage, and ingestion."""

from .bundle import (
    BundleError,
    Column,
    ColumnMismatchError,
    DatasetBundle,
    MalformedManifestError,
    load,
    save,
)
from .simulate import (
    CflViolationError,
    DivergenceError,
    pde_time_derivative,
    rk4_path,
    simulate_ode,
    simulate_pde,
    spatial_derivatives,
    spiral_field,
)
from .systems import DERIV_SUFFIXES, GridSpec, SystemSpec, get_system, system_names
from .transform import NoiseSpec, TooShortTrajectoryError, add_noise_and_difference, split

__all__ = [
    "BundleError",
    "Column",
    "ColumnMismatchError",
    "DatasetBundle",
    "MalformedManifestError",
    "load",
    "save",
    "CflViolationError",
    "DivergenceError",
    "pde_time_derivative",
    "rk4_path",
    "simulate_ode",
    "simulate_pde",
    "spatial_derivatives",
    "spiral_field",
    "DERIV_SUFFIXES",
    "GridSpec",
    "SystemSpec",
    "get_system",
    "system_names",
    "NoiseSpec",
    "TooShortTrajectoryError",
    "add_noise_and_difference",
    "split",
]
