"""Travelling vegetation pulses in the Klausmeier model with autotoxicity."""
from .model import (
    FIG4_PARAMS,
    DimensionalParams,
    EquilibriumSet,
    NondimParams,
    ScaleFactors,
    equilibria,
    kinetics,
    nondimensionalise,
)

__version__ = "0.1.0"
