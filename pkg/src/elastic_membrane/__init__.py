"""Pseudo-spectral solver for a viscous, inextensible elastic membrane on a torus.

The surface is carried in isothermal coordinates; the unknowns are the
embedding R, the unit-tangent velocity components U1, U2, the normal
velocity Un and the mean curvature H.
"""

__version__ = "0.1.0"

from .config import Config, parse_config  # noqa: E402
from .errors import (ConfigError, MembraneError, NumericalError)  # noqa: E402
from .solver import IterationReport, Trajectory, run_direct, run_picard  # noqa: E402

__all__ = ["Config", "parse_config", "ConfigError", "MembraneError", "NumericalError",
           "IterationReport", "Trajectory", "run_direct", "run_picard", "__version__"]
