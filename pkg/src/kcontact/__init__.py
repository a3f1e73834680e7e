"""Mean-field dynamics of the k-stage contact process.

Submodules:
    core       shared types, kernels, Poisson-weight coefficients
    uniform    spatially uniform solutions, classification, basin sweeps
    stability  linear stability spectra of the sustaining and inert states
    spatial    1-D nonlocal solver, stationary iteration, traveling fronts
    cli        JSON-config command line front end
"""

from . import core, spatial, stability, uniform
from .core import (
    BoxKernel,
    Classification,
    DeltaKernel,
    GaussianKernel,
    Grid1D,
    ModelParams,
    Outcome,
    PopulationState,
    TableKernel,
)

__version__ = "0.1.0"

__all__ = [
    "core",
    "uniform",
    "stability",
    "spatial",
    "ModelParams",
    "PopulationState",
    "DeltaKernel",
    "BoxKernel",
    "GaussianKernel",
    "TableKernel",
    "Grid1D",
    "Classification",
    "Outcome",
    "__version__",
]
