"""
Log-log rate fitting and bound-shape constants
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from ..errors import InvalidInputError

logger = logging.getLogger(__name__)

REGRET_FLOOR = 1e-9
MIN_HORIZONS = 3


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    horizons: int
    floored: bool = False

    def predict(self, T: float) -> float:
        return math.exp(self.intercept) * T ** self.slope

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "horizons": self.horizons, "floored": self.floored}


def fit_rate(series: Iterable[Tuple[float, float]]) -> RateFit:
    """Least-squares slope and intercept of log regret against log T"""
    pairs = sorted((float(T), float(r)) for T, r in series)
    horizons = np.array([T for T, _ in pairs])
    regrets = np.array([r for _, r in pairs])
    if np.unique(horizons).shape[0] < MIN_HORIZONS:
        raise InvalidInputError(f"rate fit needs at least {MIN_HORIZONS} distinct horizons")
    if np.any(horizons <= 0) or math.log10(horizons.max() / horizons.min()) < 1.0 - 1e-12:
        raise InvalidInputError("horizons must be positive and span at least one decade")
    floored = bool(np.any(regrets <= 0))
    if floored:
        logger.warning(f"Nonpositive regret values floored at {REGRET_FLOOR}")
        regrets = np.maximum(regrets, REGRET_FLOOR)
    result = linregress(np.log(horizons), np.log(regrets))
    return RateFit(slope=float(result.slope), intercept=float(result.intercept),
                   horizons=int(horizons.shape[0]), floored=floored)


def calibration_shape(T: float) -> float:
    """T^(1/3) log T"""
    return T ** (1.0 / 3.0) * math.log(max(T, 2.0))


def discretized_shape(eps: float, T: float) -> float:
    """sqrt(eps T) + log(T) / eps"""
    return math.sqrt(eps * T) + math.log(max(T, 2.0)) / eps


def discretized_bound_constant(lipschitz: float, alpha: float) -> float:
    """
    C with sum_s gdk_bound(L, alpha, eps, G_s) <= C * discretized_shape(eps, T)
    whenever the G_s over the 1/eps + 1 lattice points sum to T >= 4 and eps <= 1.

    The sqrt terms are bounded by Cauchy-Schwarz, the log terms by
    1/eps + 1 <= 2/eps and log(T + 1) + 1 <= 2 log T.
    """
    if lipschitz <= 0 or alpha <= 0:
        raise InvalidInputError(f"need lipschitz > 0 and alpha > 0, got {lipschitz}, {alpha}")
    return max(4.0 * lipschitz, 4.0 * lipschitz ** 2 / alpha)


def fit_constant(values: Sequence[float], shapes: Sequence[float]) -> float:
    """Smallest C with value <= C * shape for every pair"""
    ratios = [v / s for v, s in zip(values, shapes) if s > 0]
    if not ratios:
        raise InvalidInputError("no positive bound shapes to fit against")
    return max(ratios)
