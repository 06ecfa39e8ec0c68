"""Numerical stability lab for a thermoelastic plate on an annulus coupled to a membrane on the inner disk."""

from .errors import (
    AssemblyError, ConsistencyError, DegenerateSymbolError, DiscretizationError, NumericalError,
    ParameterError, PlateLabError, ResolutionError, SingularityError, UsageError,
)
from .params import Geometry, PhysicalParams
from .polar import ModeGrid, build_mode_grid
from .operator import ModeOperator, StateVector, assemble, dissipation_rate, energy
from .stability import (
    EnergyTrajectory, ResolventScan, StabilityReport, evolve, growth_exponent_fit,
    polynomial_decay_probe, resolvent_norm, resolvent_scan, spectral_abscissa_profile, spectrum,
)

__version__ = "0.1.0"
