"""Pseudo-spectral laboratory for the compressible Navier-Stokes-Korteweg system."""

__version__ = "0.1.0"

from .errors import NSKError  # noqa: E402
from .grid import Grid, SpectralState, forward, inverse  # noqa: E402
from .model import ExponentSet, ModelParams, Polytropic, Tabulated, validate_exponents, validate_params  # noqa: E402
from .propagator import apply_semigroup, apply_split_semigroup  # noqa: E402

__all__ = [
    "NSKError",
    "Grid",
    "SpectralState",
    "forward",
    "inverse",
    "ExponentSet",
    "ModelParams",
    "Polytropic",
    "Tabulated",
    "validate_exponents",
    "validate_params",
    "apply_semigroup",
    "apply_split_semigroup",
]
