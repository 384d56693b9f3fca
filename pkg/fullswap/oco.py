"""
Scaled external-regret subroutines

Every round the learner plays x_t, then sees a loss l_t and a scale g_t in
[0, 1]; regret is measured on the scaled losses g_t * l_t. Three
projected-gradient schedules are supported:

    convex  eta = c / sqrt(G)                  c = D / (L sqrt 2)
    gds     eta = 1/alpha, then 1/(alpha G)    strongly convex losses
    gdk     eta = 2/alpha, 2/(alpha G), then c/sqrt(G) with c = sqrt(2) eps / L

plus multiplicative weights over a finite point set. The step functions are
pure; the learner classes wrap them with recommend()/update(loss, g).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError, UnsupportedDimensionError
from .geometry import ConvexBody, Discretization, as_point, interval
from .losses import CONVEX_CLASSES, LossSpec, piecewise_linearize

logger = logging.getLogger(__name__)

SCHEDULES = ("convex", "gds", "gdk")

SCHEDULE_CLASSES = {
    "convex": CONVEX_CLASSES,
    "gds": ("strongly-convex", "sc-smooth"),
    "gdk": ("strongly-convex", "sc-smooth", "nsc"),
}

SCALE_SLACK = 1e-12


def lr_schedule(tag: str, alpha: float, c: float, G: float) -> float:
    """Learning rate R'(G) of the named schedule"""
    if G < 0 or not math.isfinite(G):
        raise InvalidInputError(f"cumulative scale must be nonnegative, got {G}")
    if tag == "convex":
        return c / math.sqrt(G) if G > 0 else c
    if alpha <= 0:
        raise InvalidInputError(f"schedule '{tag}' needs alpha > 0, got {alpha}")
    if tag == "gds":
        return 1.0 / alpha if G <= 1.0 else 1.0 / (alpha * G)
    if tag == "gdk":
        if G <= 1.0:
            return 2.0 / alpha
        threshold = (2.0 / (alpha * c)) ** 2 if c > 0 else math.inf
        if G <= threshold:
            return 2.0 / (alpha * G)
        return c / math.sqrt(G)
    raise InvalidInputError(f"unknown schedule '{tag}' (known: {SCHEDULES})")


def gdk_constant(epsilon: float, lipschitz: float) -> float:
    """c = sqrt(2) eps / L"""
    return math.sqrt(2.0) * epsilon / lipschitz if lipschitz > 0 else 0.0


def convex_constant(diameter: float, lipschitz: float) -> float:
    """c = D / (L sqrt 2), which gives regret <= D L sqrt(2 G)"""
    return diameter / (lipschitz * math.sqrt(2.0)) if lipschitz > 0 else diameter


def gds_bound(lipschitz: float, alpha: float, G: float) -> float:
    return lipschitz ** 2 / (2.0 * alpha) * (math.log(G + 1.0) + 1.0)


def gdk_bound(lipschitz: float, alpha: float, epsilon: float, G: float) -> float:
    return (2.0 * math.sqrt(2.0) * epsilon * lipschitz * math.sqrt(G)
            + lipschitz ** 2 / alpha * (math.log(G + 1.0) + 1.0))


def ogd_bound(lipschitz: float, G: float, diameter: float = 1.0) -> float:
    return diameter * lipschitz * math.sqrt(2.0 * G)


def mwu_bound(k: int, G: float, loss_range: float) -> float:
    """Adaptive-rate Hedge envelope 2 B sqrt(max(G, 1) log k) + B"""
    return 2.0 * loss_range * math.sqrt(max(G, 1.0) * math.log(max(k, 1))) + loss_range


def _check_scale(g: float) -> float:
    g = float(g)
    if not (-SCALE_SLACK <= g <= 1.0 + SCALE_SLACK):
        raise InvalidInputError(f"scale must lie in [0, 1], got {g}")
    return min(max(g, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class ScaledOcoState:
    """Projected gradient state; x is the point played next"""

    body: ConvexBody
    x: np.ndarray
    G: float = 0.0
    lipschitz: float = 1.0
    alpha: float = 0.0
    epsilon: float = 0.0
    c: float = 0.0
    schedule: str = "convex"
    t: int = 0
    eta: float = 0.0

    @classmethod
    def start(cls, body: ConvexBody, schedule: str, lipschitz: float, alpha: float = 0.0,
              epsilon: float = 0.0, x0=None) -> "ScaledOcoState":
        if schedule not in SCHEDULES:
            raise InvalidInputError(f"unknown schedule '{schedule}' (known: {SCHEDULES})")
        if schedule in ("gds", "gdk") and alpha <= 0:
            raise ConfigurationError(f"schedule '{schedule}' needs alpha > 0, got {alpha}")
        if schedule == "gdk":
            c = gdk_constant(epsilon, lipschitz)
        elif schedule == "convex":
            c = convex_constant(body.diameter_bound, lipschitz)
        else:
            c = 0.0
        x = body.center() if x0 is None else body.project(as_point(x0, body.dimension))
        return cls(body=body, x=x, lipschitz=float(lipschitz), alpha=float(alpha),
                   epsilon=float(epsilon), c=c, schedule=schedule)

    def learning_rate(self, G: Optional[float] = None) -> float:
        return lr_schedule(self.schedule, self.alpha, self.c, self.G if G is None else G)


def _check_compatible(schedule: str, loss: LossSpec):
    if loss.loss_class not in SCHEDULE_CLASSES[schedule]:
        raise ConfigurationError(
            f"loss class '{loss.loss_class}' cannot drive the '{schedule}' schedule")


def ogd_step(state: ScaledOcoState, loss: LossSpec, g: float) -> Tuple[np.ndarray, ScaledOcoState]:
    """
    One scaled projected-gradient update.

    Returns (played point, new state); the played point is the pre-update x.
    """
    _check_compatible(state.schedule, loss)
    g = _check_scale(g)
    play = state.x.copy()
    if g == 0.0:
        return play, replace(state, t=state.t + 1)
    G = state.G + g
    eta = lr_schedule(state.schedule, state.alpha, state.c, G)
    x_next = state.body.project(state.x - eta * g * loss.subgradient(state.x))
    return play, replace(state, x=x_next, G=G, t=state.t + 1, eta=eta)


def _linearized_on(loss: LossSpec, knots: np.ndarray) -> bool:
    return (loss.loss_class == "nsc" and loss.knots is not None
            and loss.knots.shape == knots.shape and np.array_equal(loss.knots, knots))


def gdk2_step(state: ScaledOcoState, loss: LossSpec, g: float,
              grid: Discretization) -> Tuple[np.ndarray, ScaledOcoState]:
    """The gdk update driven by the piecewise linearization of loss on grid"""
    if grid.dimension != 1 or state.body.dimension != 1:
        raise UnsupportedDimensionError("linearized gradient descent is only defined for d = 1")
    if state.schedule != "gdk":
        raise ConfigurationError(f"linearized updates need the 'gdk' schedule, got '{state.schedule}'")
    knots = grid.points[:, 0]
    if not _linearized_on(loss, knots):
        if loss.alpha <= 0:
            raise ConfigurationError(f"loss '{loss.name}' is not strongly convex")
        loss = piecewise_linearize(loss, grid)
    return ogd_step(state, loss, g)


@dataclass(frozen=True, eq=False)
class MwuState:
    """Multiplicative weights kept as cumulative scaled losses"""

    cumulative: np.ndarray
    G: float = 0.0
    eta: Optional[float] = None
    loss_range: float = 1.0
    t: int = 0

    @classmethod
    def start(cls, k: int, eta: Optional[float] = None, loss_range: float = 1.0) -> "MwuState":
        if k < 1:
            raise InvalidInputError("multiplicative weights need at least one point")
        if eta is not None and eta < 0:
            raise InvalidInputError(f"learning rate must be nonnegative, got {eta}")
        return cls(cumulative=np.zeros(k), eta=eta, loss_range=max(float(loss_range), 1e-12))

    @property
    def size(self) -> int:
        return self.cumulative.shape[0]

    def learning_rate(self) -> float:
        """Fixed eta, or sqrt(log k / max(G, 1)) / loss_range"""
        if self.eta is not None:
            return self.eta
        return math.sqrt(math.log(self.size) / max(self.G, 1.0)) / self.loss_range

    def log_weights(self) -> np.ndarray:
        return -self.learning_rate() * self.cumulative

    def distribution(self) -> np.ndarray:
        z = self.log_weights()
        z -= z.max()
        w = np.exp(z)
        return w / w.sum()


def mwu_step(state: MwuState, losses, g: float) -> MwuState:
    """w[s] <- w[s] * exp(-eta * g * losses[s])"""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != state.cumulative.shape or not np.all(np.isfinite(losses)):
        raise InvalidInputError(f"expected {state.size} finite losses, got shape {losses.shape}")
    g = _check_scale(g)
    if g == 0.0:
        return replace(state, t=state.t + 1)
    return replace(state, cumulative=state.cumulative + g * losses, G=state.G + g, t=state.t + 1)


class OgdLearner:
    """Scaled projected gradient descent with recommend()/update(loss, g)"""

    def __init__(self, body: ConvexBody, schedule: str, lipschitz: float, alpha: float = 0.0,
                 epsilon: float = 0.0, x0=None):
        self.state = ScaledOcoState.start(body, schedule, lipschitz, alpha, epsilon, x0)
        self.learning_rates: List[float] = []

    @property
    def schedule(self) -> str:
        return self.state.schedule

    def recommend(self) -> np.ndarray:
        return self.state.x.copy()

    def surrogate(self, loss: LossSpec) -> LossSpec:
        """The loss this learner actually descends on"""
        return loss

    def update(self, loss: LossSpec, g: float):
        _, self.state = ogd_step(self.state, loss, g)
        if g > 0:
            self.learning_rates.append(self.state.eta)

    def regret_bound(self) -> float:
        """Guaranteed scaled regret of the schedule at the current cumulative scale"""
        s = self.state
        if s.G <= 0:
            return 0.0
        if s.schedule == "gds":
            return gds_bound(s.lipschitz, s.alpha, s.G)
        if s.schedule == "gdk":
            return gdk_bound(s.lipschitz, s.alpha, s.epsilon, s.G)
        return ogd_bound(s.lipschitz, s.G, s.body.diameter_bound)


class Gdk2Learner(OgdLearner):
    """gdk on conv(grid) fed piecewise-linearized losses"""

    def __init__(self, grid: Discretization, lipschitz: float, alpha: float, x0=None):
        if grid.dimension != 1:
            raise UnsupportedDimensionError("linearized gradient descent is only defined for d = 1")
        knots = grid.points[:, 0]
        hull = interval(float(knots[0]), float(knots[-1]))
        super().__init__(hull, "gdk", lipschitz, alpha, grid.max_gap(), x0)
        self.grid = grid

    def surrogate(self, loss: LossSpec) -> LossSpec:
        if _linearized_on(loss, self.grid.points[:, 0]):
            return loss
        return piecewise_linearize(loss, self.grid)

    def update(self, loss: LossSpec, g: float):
        _, self.state = gdk2_step(self.state, loss, g, self.grid)
        if g > 0:
            self.learning_rates.append(self.state.eta)


class MwuLearner:
    """Multiplicative weights over the rows of a point array"""

    def __init__(self, points: np.ndarray, eta: Optional[float] = None, loss_range: float = 1.0):
        self.points = np.atleast_2d(points)
        self.state = MwuState.start(self.points.shape[0], eta, loss_range)

    def recommend(self) -> np.ndarray:
        return self.state.distribution()

    def surrogate(self, loss: LossSpec) -> LossSpec:
        return loss

    def update_values(self, values: np.ndarray, g: float):
        self.state = mwu_step(self.state, values, g)

    def update(self, loss: LossSpec, g: float):
        self.update_values(loss.values_at(self.points), g)

    def regret_bound(self) -> float:
        """Adaptive-rate envelope; a fixed eta carries no guarantee here"""
        if self.state.G <= 0:
            return 0.0
        if self.state.eta is not None:
            return math.inf
        return mwu_bound(self.state.size, self.state.G, self.state.loss_range)
