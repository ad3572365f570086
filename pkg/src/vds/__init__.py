"""Viscoelastic wave equation with a time-varying delayed feedback.

Finite-difference simulator plus the energy/Lyapunov diagnostics used to
check dissipation and decay rates numerically.
"""

from .config import RunConfig, load_config, parse_config, serialize_config
from .delay import ConstantDelay, SinusoidalDelay
from .feasibility import DampingPair, certify
from .field import Grid
from .kernel import Constant, Hyperbolic, PowerLaw, PronySum, Zero
from .runner import RunResult, run
from .solver import DivergenceError, Simulation

__all__ = [
    "Constant",
    "ConstantDelay",
    "DampingPair",
    "DivergenceError",
    "Grid",
    "Hyperbolic",
    "PowerLaw",
    "PronySum",
    "RunConfig",
    "RunResult",
    "SinusoidalDelay",
    "Simulation",
    "Zero",
    "certify",
    "load_config",
    "parse_config",
    "run",
    "serialize_config",
]

__version__ = "0.1.0"
