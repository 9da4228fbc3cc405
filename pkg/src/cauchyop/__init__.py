"""Cauchy integral operators for first-order elliptic systems on a periodic half-space grid."""

__version__ = "0.1.0"

from .coeff import CoefficientTensor, PerturbationField  # noqa: E402
from .errors import CauchyOpError  # noqa: E402
from .flow import FlowConfig  # noqa: E402
from .funcalc import SpectralDecomp, Symbol, assemble_DB0  # noqa: E402
from .grid import BoundaryField, HalfSpaceField, TGrid, TorusGrid  # noqa: E402
from .solver import SolveResult, solve_cauchy  # noqa: E402

__all__ = ["BoundaryField", "CauchyOpError", "CoefficientTensor", "FlowConfig", "HalfSpaceField",
           "PerturbationField", "SolveResult", "SpectralDecomp", "Symbol", "TGrid", "TorusGrid",
           "assemble_DB0", "solve_cauchy", "__version__"]
