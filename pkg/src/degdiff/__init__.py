"""Regularized solvers and estimate diagnostics for ``u_t - D Lap(u^m) = |grad u|^q + f``."""
from .grid import Field, Grid
from .model import (
    InitialDataSpec,
    Nonlinearity,
    ProblemSpec,
    Regime,
    RegimeTag,
    SourceSpec,
    classify_regime,
)
from .solver import Regularization, StepperConfig, Trajectory, run, run_schedule

__all__ = [
    "Field",
    "Grid",
    "InitialDataSpec",
    "Nonlinearity",
    "ProblemSpec",
    "Regime",
    "RegimeTag",
    "Regularization",
    "SourceSpec",
    "StepperConfig",
    "Trajectory",
    "classify_regime",
    "run",
    "run_schedule",
]

__version__ = "0.1.0"
