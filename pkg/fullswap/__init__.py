"""
fullswap: full swap regret minimization over convex action sets

    geometry      convex bodies, eps-nets, triangulations, boundary polytopes
    losses        losses with declared regularity, piecewise linearization
    oco           scaled external-regret subroutines (OGD schedules, MWU)
    swap_engine   Blum-Mansour style engines and the configuration table
    calibration   online l2 and discretized calibration forecasters
    games         structured games and the reduction to full swap regret
    harness       adversaries, evaluators, experiment runner and CLI
"""

from .errors import (
    ConfigurationError,
    FullSwapError,
    GeometryInconsistencyError,
    InfeasibleError,
    InvalidInputError,
    NumericalError,
    UnsupportedBodyError,
    UnsupportedDimensionError,
    UnsupportedEvaluationError,
)
from .swap_engine import SwapEngine, configure_from_table

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "FullSwapError",
    "GeometryInconsistencyError",
    "InfeasibleError",
    "InvalidInputError",
    "NumericalError",
    "SwapEngine",
    "UnsupportedBodyError",
    "UnsupportedDimensionError",
    "UnsupportedEvaluationError",
    "configure_from_table",
]
