"""Polynomial curves from harmonic moments, their equilibrium energy, and the normal-matrix eigenvalue gas."""

from .curve import MomentVector, PolynomialCurve, Region, forward_moments
from .energy import DomainSpec, Potential
from .errors import ConvergenceError, InversionError, RegimeError, ToleranceError
from .gas_sampler import SampleSet, SamplerConfig
from .laurent import LaurentSeries
from .moment_inverse import SolverConfig, solve, solve_shifted

__all__ = [
    "ConvergenceError",
    "DomainSpec",
    "InversionError",
    "LaurentSeries",
    "MomentVector",
    "PolynomialCurve",
    "Potential",
    "RegimeError",
    "Region",
    "SampleSet",
    "SamplerConfig",
    "SolverConfig",
    "ToleranceError",
    "forward_moments",
    "solve",
    "solve_shifted",
]
