"""
Online calibration as full swap regret

Forecasts are distributions over a finite grid of probabilities in [0, 1].
l2-calibration error is the full swap regret of the squared losses
(x - b_t)^2, so the forecasters here are swap engines fed those losses:

    l2_forecaster           sc-smooth configuration, grid spacing T^(-1/3)
    discretized_forecaster  linearized gradient descent on the eps-lattice
    rounded_l2_forecaster   l2_forecaster with forecasts snapped to the lattice
    plain_bm_forecaster     Blum-Mansour with multiplicative weights over the lattice

All of them expose next_forecast() / observe(b).
"""

import csv
import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidInputError
from .games import StructuredGame
from .geometry import build_interval_grid
from .losses import UNIT_INTERVAL, make_calibration_loss
from .swap_engine import EngineConfig, MixedAction, SwapEngine, configure_from_table

logger = logging.getLogger(__name__)

LATTICE_TOLERANCE = 1e-12


@dataclass
class CalibrationTranscript:
    """Forecast distributions and binary outcomes, round by round"""

    forecasts: List[MixedAction] = field(default_factory=list)
    outcomes: List[int] = field(default_factory=list)
    epsilon: Optional[float] = None

    def append(self, forecast: MixedAction, b: int):
        if b not in (0, 1):
            raise InvalidInputError(f"outcome must be 0 or 1, got {b}")
        if forecast.points is None:
            raise InvalidInputError("forecast must carry its probability values")
        if self.epsilon is not None:
            check_on_lattice(forecast.points[:, 0], self.epsilon)
        self.forecasts.append(forecast)
        self.outcomes.append(int(b))

    def __len__(self) -> int:
        return len(self.outcomes)

    def buckets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(forecast values, total mass, outcome-weighted mass) over the union of supports"""
        if not self.forecasts:
            raise InvalidInputError("transcript has no rounds")
        values = np.concatenate([f.points[:, 0] for f in self.forecasts])
        masses = np.concatenate([f.probabilities for f in self.forecasts])
        hits = np.concatenate([f.probabilities * b for f, b in zip(self.forecasts, self.outcomes)])
        keys, inverse = np.unique(values, return_inverse=True)
        mass = np.zeros(keys.shape[0])
        hit = np.zeros(keys.shape[0])
        np.add.at(mass, inverse, masses)
        np.add.at(hit, inverse, hits)
        keep = mass > 0
        return keys[keep], mass[keep], hit[keep]

    def mean_forecasts(self) -> np.ndarray:
        return np.array([float(f.mean()[0]) for f in self.forecasts])

    def to_csv(self, path) -> str:
        """One row per round: t, support, probs, b_t"""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "support", "probs", "b_t"])
            for t, (forecast, b) in enumerate(zip(self.forecasts, self.outcomes), start=1):
                writer.writerow([t, " ".join(f"{p:.12g}" for p in forecast.points[:, 0]),
                                 " ".join(f"{p:.12g}" for p in forecast.probabilities), b])
        logger.info(f"Calibration transcript ({len(self)} rounds) saved to: {path}")
        return str(path)

    @classmethod
    def from_csv(cls, path, epsilon: Optional[float] = None) -> "CalibrationTranscript":
        transcript = cls(epsilon=epsilon)
        with open(path, "r", newline="") as f:
            for row in csv.DictReader(f):
                values = np.array([float(v) for v in row["support"].split()])
                probs = np.array([float(p) for p in row["probs"].split()])
                forecast = MixedAction(np.arange(values.shape[0]), probs / probs.sum(),
                                       values[:, None])
                transcript.append(forecast, int(row["b_t"]))
        return transcript

    def summary(self) -> Dict:
        info = {
            "rounds": len(self),
            "l2_calibration_error": l2_calibration_error(self),
            "outcome_rate": float(np.mean(self.outcomes)) if self.outcomes else 0.0,
            "final_mean_forecast": float(self.forecasts[-1].mean()[0]) if self.forecasts else None,
            "epsilon": self.epsilon,
        }
        if self.epsilon is not None:
            info["discretized_calibration_error"] = discretized_calibration_error(self, self.epsilon)
        return info

    def save_summary(self, path) -> str:
        summary = self.summary()
        summary["timestamp"] = datetime.now().strftime("%Y%m%d_%H%M%S")
        with open(path, "w") as f:
            json.dump(summary, f, indent=2, default=str)
        logger.info(f"Calibration summary saved to: {path}")
        return str(path)


def check_on_lattice(values: np.ndarray, eps: float):
    """Raise unless every value is a multiple of eps"""
    scaled = np.asarray(values, dtype=float) / eps
    off = np.abs(scaled - np.round(scaled)) * eps
    if np.any(off > LATTICE_TOLERANCE):
        bad = np.asarray(values)[off > LATTICE_TOLERANCE]
        raise InvalidInputError(f"forecasts {bad[:5].tolist()} are not multiples of {eps}")


def lattice_steps(eps: float) -> int:
    """1/eps as an integer; raises unless eps divides 1"""
    if not math.isfinite(eps) or eps <= 0 or eps > 1:
        raise InvalidInputError(f"lattice spacing must lie in (0, 1], got {eps}")
    n = int(round(1.0 / eps))
    if n < 1 or abs(n * eps - 1.0) > 1e-9:
        raise InvalidInputError(f"1/eps must be an integer, got eps={eps}")
    return n


def round_to_lattice(value, eps: float):
    """Nearest multiple of eps; exact ties go to the even multiple"""
    return np.round(np.asarray(value, dtype=float) / eps) * eps


def l2_calibration_error(tr: CalibrationTranscript) -> float:
    """sum_p mass(p) * (p - bbar(p))^2"""
    values, mass, hit = tr.buckets()
    bbar = hit / mass
    return float(np.sum(mass * (values - bbar) ** 2))


def discretized_calibration_error(tr: CalibrationTranscript, eps: float) -> float:
    """l2 calibration with bbar(p) rounded to the eps-lattice before squaring"""
    values, mass, hit = tr.buckets()
    check_on_lattice(values, eps)
    p_index = np.round(values / eps)
    b_index = np.round((hit / mass) / eps)
    return float(np.sum(mass * ((p_index - b_index) * eps) ** 2))


def discretized_swap_regret(tr: CalibrationTranscript, eps: float) -> float:
    """
    Swap regret of the squared loss against swaps into the eps-lattice.

    Each forecast p is compared with the best lattice point for its own
    rounds, which is [bbar(p)]_eps:

        sum_p mass(p) * ((p - bbar)^2 - ([bbar]_eps - bbar)^2)
    """
    values, mass, hit = tr.buckets()
    check_on_lattice(values, eps)
    bbar = hit / mass
    rounded = round_to_lattice(bbar, eps)
    return float(np.sum(mass * ((values - bbar) ** 2 - (rounded - bbar) ** 2)))


def rounding_excess(tr: CalibrationTranscript, eps: float) -> float:
    """
    eps * sum_p mass(p) |p - [bbar(p)]_eps|

    The discretized calibration error never exceeds discretized_swap_regret
    plus this term. It is large when bbar sits near a lattice midpoint and
    the forecasts straddle it.
    """
    values, mass, hit = tr.buckets()
    check_on_lattice(values, eps)
    rounded = round_to_lattice(hit / mass, eps)
    return float(eps * np.sum(mass * np.abs(values - rounded)))


def calibration_embedding(x) -> np.ndarray:
    """v_x = (2x - 1, -x^2)"""
    x = float(x)
    return np.array([2.0 * x - 1.0, -x * x])


def outcome_embedding(b) -> np.ndarray:
    """w_b = (b, 1); <v_x, w_b> = -(x - b)^2 for b in {0, 1}"""
    return np.array([float(b), 1.0])


def calibration_game(grid_values):
    """The calibration game over a grid of forecasts as a structured game"""
    v = np.stack([calibration_embedding(x) for x in grid_values])
    w = np.stack([outcome_embedding(0), outcome_embedding(1)])
    return StructuredGame(v=v, w=w, norm_bound=math.sqrt(2.0))


class Forecaster(ABC):
    """Streaming forecaster: next_forecast() then observe(b), every round"""

    name = "forecaster"

    def __init__(self, epsilon: Optional[float] = None):
        self.transcript = CalibrationTranscript(epsilon=epsilon)
        self._current: Optional[MixedAction] = None

    @abstractmethod
    def _forecast(self) -> MixedAction:
        pass

    @abstractmethod
    def _learn(self, b: int):
        pass

    def next_forecast(self) -> MixedAction:
        if self._current is not None:
            raise InvalidInputError("previous forecast has not been resolved by observe()")
        self._current = self._forecast()
        return self._current

    def observe(self, b: int):
        if self._current is None:
            raise InvalidInputError("observe() called before next_forecast()")
        self.transcript.append(self._current, b)
        self._current = None
        self._learn(b)


class EngineForecaster(Forecaster):
    """Feeds (x - b)^2 to a swap engine over a grid of [0, 1]"""

    def __init__(self, engine: SwapEngine, name: str, epsilon: Optional[float] = None):
        super().__init__(epsilon)
        self.engine = engine
        self.name = name

    @property
    def grid(self) -> np.ndarray:
        return self.engine.disc.points[:, 0]

    def _forecast(self) -> MixedAction:
        return self.engine.next_action()

    def _learn(self, b: int):
        self.engine.observe(make_calibration_loss(b))


class RoundedForecaster(Forecaster):
    """Snaps every support point of an inner forecaster onto the eps-lattice"""

    def __init__(self, inner: Forecaster, eps: float, name: str):
        n = lattice_steps(eps)
        super().__init__(1.0 / n)
        self.inner = inner
        self.name = name
        self.lattice = np.linspace(0.0, 1.0, n + 1)[:, None]

    def _forecast(self) -> MixedAction:
        raw = self.inner.next_forecast()
        index = np.round(raw.points[:, 0] * (self.lattice.shape[0] - 1)).astype(int)
        return MixedAction.from_weights(index, raw.probabilities, self.lattice)

    def _learn(self, b: int):
        self.inner.observe(b)


def l2_forecaster(T: int, record: bool = False) -> EngineForecaster:
    """Swap-engine forecaster with the sc-smooth configuration in d = 1"""
    if T < 1:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    config = configure_from_table("sc-smooth", 1, T)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=2.0, alpha=2.0, record=record)
    logger.info(f"l2 forecaster: T={T}, {engine.size} grid points")
    return EngineForecaster(engine, "l2-swap")


def _lattice_config(T: int, eps: float, algorithm: str, subroutine: str,
                    rounding: Optional[str]) -> EngineConfig:
    if T < 1:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    log_eps = math.log(eps) / math.log(T) if T > 1 else 0.0
    exponent = max((1.0 + log_eps) / 2.0, -log_eps)
    return EngineConfig(algorithm=algorithm, discretizer="triangulation", epsilon=eps,
                        subroutine=subroutine, rounding=rounding, exponent=exponent,
                        loss_class="sc-smooth", dimension=1, horizon=T, row="discretized")


def discretized_forecaster(T: int, eps: float, record: bool = False) -> EngineForecaster:
    """Lattice forecaster: linearized gradient descent learners with interval rounding"""
    n = lattice_steps(eps)
    grid = build_interval_grid(0.0, 1.0, 1.0 / n)
    config = _lattice_config(T, 1.0 / n, "bmcs", "gdk2", "interval")
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=2.0, alpha=2.0, disc=grid,
                                    record=record)
    logger.info(f"Discretized forecaster: T={T}, eps=1/{n}")
    return EngineForecaster(engine, "discretized-swap", epsilon=1.0 / n)


def rounded_l2_forecaster(T: int, eps: float) -> RoundedForecaster:
    """The l2 forecaster with forecasts rounded to the nearest lattice point"""
    return RoundedForecaster(l2_forecaster(T), eps, "rounded-l2")


def plain_bm_forecaster(T: int, eps: float, record: bool = False) -> EngineForecaster:
    """Blum-Mansour with multiplicative weights over the 1/eps + 1 lattice forecasts"""
    n = lattice_steps(eps)
    grid = build_interval_grid(0.0, 1.0, 1.0 / n)
    config = _lattice_config(T, 1.0 / n, "bmns", "mwu", None)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=2.0, loss_range=1.0,
                                    disc=grid, record=record)
    return EngineForecaster(engine, "plain-bm", epsilon=1.0 / n)


FORECASTERS = {
    "l2-swap": lambda T, eps: l2_forecaster(T),
    "discretized-swap": discretized_forecaster,
    "rounded-l2": rounded_l2_forecaster,
    "plain-bm": plain_bm_forecaster,
}
