"""Output-current statistics of Lindblad master equations near dissipative phase transitions."""
from __future__ import annotations

__version__ = "0.1.0"

from .engine import (
    LindbladSystem,
    SteadyState,
    liouvillian_spectrum,
    propagate,
    resolvent_solve,
    steady_state,
)
from .errors import OpenCurrentsError
from .homodyne import HomodyneConfig, homodyne_statistics
from .models import (
    KerrParams,
    QubitParams,
    XYZParams,
    build_kerr,
    build_qubit,
    build_xyz,
)
from .stats import (
    CurrentStatistics,
    characteristic_timescale,
    correlation,
    current_statistics,
    output_current,
    power_spectrum,
    white_noise_strength,
)

__all__ = [
    "CurrentStatistics",
    "HomodyneConfig",
    "KerrParams",
    "LindbladSystem",
    "OpenCurrentsError",
    "QubitParams",
    "SteadyState",
    "XYZParams",
    "build_kerr",
    "build_qubit",
    "build_xyz",
    "characteristic_timescale",
    "correlation",
    "current_statistics",
    "homodyne_statistics",
    "liouvillian_spectrum",
    "output_current",
    "power_spectrum",
    "propagate",
    "resolvent_solve",
    "steady_state",
    "white_noise_strength",
]
