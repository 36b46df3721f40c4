"""Quantitative photoacoustic inversion: simulated data generation and
direct absorption/diffusion reconstruction from time-series pressure."""

from .acoustic import (
    AcousticMedium,
    AcousticPropagator,
    MeasurementSeries,
    adjoint_acoustic,
    forward_acoustic,
)
from .composite import CompositeModel, ParamScaling
from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigError, NumericalError
from .geometry import FeMesh, Grid, GridSpec, build_grid, build_mesh
from .optical import CoefficientPair, Illumination, assemble, illumination_on_sides
from .regularization import build_difference_operator, shrink
from .solvers import run_admm, run_ld, run_pdipm

__version__ = "0.1.0"

__all__ = [
    "AcousticMedium",
    "AcousticPropagator",
    "MeasurementSeries",
    "forward_acoustic",
    "adjoint_acoustic",
    "CompositeModel",
    "ParamScaling",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "ConfigError",
    "NumericalError",
    "FeMesh",
    "Grid",
    "GridSpec",
    "build_grid",
    "build_mesh",
    "CoefficientPair",
    "Illumination",
    "assemble",
    "illumination_on_sides",
    "build_difference_operator",
    "shrink",
    "run_admm",
    "run_ld",
    "run_pdipm",
    "__version__",
]
