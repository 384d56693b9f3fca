"""
Adversary suite

Bit adversaries answer a forecast with an outcome b_t, loss adversaries
answer a play with a loss, strategy adversaries answer a learner's mixed
strategy with their own. Specs are strings such as "bernoulli(0.9)",
"periodic(011)" or "linear-random(3)".
"""

import logging
import re
from abc import ABC, abstractmethod
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..geometry import ConvexBody
from ..games import StructuredGame
from ..losses import LossSpec, make_linear_loss, make_quadratic_loss
from ..swap_engine import MixedAction

logger = logging.getLogger(__name__)

SPEC_PATTERN = re.compile(r"^\s*([a-z][a-z-]*)\s*(?:\((.*)\))?\s*$")

BIT_ADVERSARIES = ("bernoulli", "periodic", "adaptive-opposite", "adaptive-mean-revert")
LOSS_ADVERSARIES = ("linear-random", "quadratic-random")
STRATEGY_ADVERSARIES = ("zero-sum-best-response",)


class Adversary(ABC):
    kind = "abstract"

    def __init__(self, name: str):
        self.name = name

    def get_name(self) -> str:
        return self.name


class BitAdversary(Adversary):
    """Chooses b_t in {0, 1} after seeing the forecast distribution"""

    kind = "bit"

    def __init__(self, name: str):
        super().__init__(name)
        self.history: List[int] = []

    @abstractmethod
    def _choose(self, forecast: MixedAction) -> int:
        pass

    def next_outcome(self, forecast: MixedAction) -> int:
        b = int(self._choose(forecast))
        self.history.append(b)
        return b


class BernoulliAdversary(BitAdversary):
    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"bernoulli parameter must lie in [0, 1], got {p}")
        super().__init__(f"bernoulli({p:g})")
        self.p = p
        self.rng = rng

    def _choose(self, forecast: MixedAction) -> int:
        return int(self.rng.random() < self.p)


class PeriodicAdversary(BitAdversary):
    def __init__(self, pattern: str):
        if not pattern or set(pattern) - {"0", "1"}:
            raise ConfigurationError(f"periodic pattern must be a non-empty 0/1 string, got '{pattern}'")
        super().__init__(f"periodic({pattern})")
        self.pattern = [int(c) for c in pattern]

    def _choose(self, forecast: MixedAction) -> int:
        return self.pattern[len(self.history) % len(self.pattern)]


class AdaptiveOppositeAdversary(BitAdversary):
    """b_t = 1 iff the mean forecast is below 1/2"""

    def __init__(self):
        super().__init__("adaptive-opposite")

    def _choose(self, forecast: MixedAction) -> int:
        return int(float(forecast.mean()[0]) < 0.5)


class AdaptiveMeanRevertAdversary(BitAdversary):
    """b_t = 1 iff the outcome frequency so far is below 1/2"""

    def __init__(self):
        super().__init__("adaptive-mean-revert")

    def _choose(self, forecast: MixedAction) -> int:
        if not self.history:
            return 1
        return int(np.mean(self.history) < 0.5)


class LossAdversary(Adversary):
    """Draws the next loss over a body"""

    kind = "loss"

    def __init__(self, name: str, body: ConvexBody, rng: np.random.Generator):
        super().__init__(name)
        self.body = body
        self.rng = rng

    @abstractmethod
    def next_loss(self, play: Optional[MixedAction] = None) -> LossSpec:
        pass


class LinearRandomAdversary(LossAdversary):
    """<c_t, x> with c_t uniform in the ball of radius L"""

    def __init__(self, body: ConvexBody, rng: np.random.Generator, lipschitz: float = 1.0):
        super().__init__("linear-random", body, rng)
        self.lipschitz = lipschitz

    def next_loss(self, play: Optional[MixedAction] = None) -> LossSpec:
        d = self.body.dimension
        direction = self.rng.normal(size=d)
        direction /= max(np.linalg.norm(direction), 1e-300)
        c = direction * self.lipschitz * self.rng.uniform() ** (1.0 / d)
        return make_linear_loss(c, lipschitz=self.lipschitz, domain=self.body)


class QuadraticRandomAdversary(LossAdversary):
    """(alpha/2)|x - c_t|^2 with c_t drawn from the body"""

    def __init__(self, body: ConvexBody, rng: np.random.Generator, alpha: float = 2.0):
        super().__init__("quadratic-random", body, rng)
        self.alpha = alpha

    def next_loss(self, play: Optional[MixedAction] = None) -> LossSpec:
        center = self.body.sample(self.rng, 1)[0]
        return make_quadratic_loss(center, alpha=self.alpha, domain=self.body,
                                   lipschitz=self.alpha * self.body.diameter_bound)


class ZeroSumBestResponse(Adversary):
    """Best response to the learner's current mixed strategy under u_A (lowest index on ties)"""

    kind = "strategy"

    def __init__(self, game: StructuredGame):
        super().__init__("zero-sum-best-response")
        self.game = game
        self.utility = game.adversary_utility()

    def next_strategy(self, p: np.ndarray) -> np.ndarray:
        payoffs = np.asarray(p, dtype=float) @ self.utility
        q = np.zeros(self.game.n_adversary)
        q[int(np.argmax(payoffs))] = 1.0
        return q


def parse_adversary_spec(spec: str) -> Tuple[str, Optional[str]]:
    match = SPEC_PATTERN.match(spec or "")
    if match is None:
        raise ConfigurationError(f"malformed adversary spec '{spec}'")
    return match.group(1), match.group(2)


def make_adversary(spec: str, rng: Optional[np.random.Generator] = None,
                   body: Optional[ConvexBody] = None, game: Optional[StructuredGame] = None,
                   lipschitz: float = 1.0, alpha: float = 2.0) -> Adversary:
    """Build the adversary named by spec"""
    name, argument = parse_adversary_spec(spec)
    rng = rng if rng is not None else np.random.default_rng(0)
    if name == "bernoulli":
        try:
            return BernoulliAdversary(float(argument), rng)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"bernoulli needs a probability argument, got '{argument}'") from e
    if name == "periodic":
        return PeriodicAdversary((argument or "").strip())
    if name == "adaptive-opposite":
        return AdaptiveOppositeAdversary()
    if name == "adaptive-mean-revert":
        return AdaptiveMeanRevertAdversary()
    if name in LOSS_ADVERSARIES:
        if body is None:
            raise ConfigurationError(f"adversary '{name}' needs a body")
        if argument:
            try:
                rng = np.random.default_rng(int(argument))
            except ValueError as e:
                raise ConfigurationError(f"'{name}' seed must be an integer, got '{argument}'") from e
        if name == "linear-random":
            return LinearRandomAdversary(body, rng, lipschitz)
        return QuadraticRandomAdversary(body, rng, alpha)
    if name == "zero-sum-best-response":
        if game is None:
            raise ConfigurationError("zero-sum-best-response needs a game")
        return ZeroSumBestResponse(game)
    raise ConfigurationError(
        f"unknown adversary '{spec}' (known: {BIT_ADVERSARIES + LOSS_ADVERSARIES + STRATEGY_ADVERSARIES})")


class ScaledSequenceAdversary:
    """
    Adaptive loss and scale sequences for the scaled-regret envelopes.

    The loss pushes away from the learner's current point; scales are uniform
    in [0, 1] with a share of zero rounds, and the first scale is 1.
    """

    def __init__(self, schedule: str, rng: np.random.Generator, alpha: float = 1.0,
                 lipschitz: float = 1.0, zero_share: float = 0.2):
        if schedule not in ("convex", "gds", "gdk"):
            raise ConfigurationError(f"no scaled sequence for schedule '{schedule}'")
        self.schedule = schedule
        self.rng = rng
        self.alpha = alpha
        self.lipschitz = lipschitz
        self.zero_share = zero_share
        self.t = 0

    def next_round(self, x: np.ndarray) -> Tuple[LossSpec, float]:
        self.t += 1
        if self.t == 1:
            g = 1.0
        elif self.rng.random() < self.zero_share:
            g = 0.0
        else:
            g = float(self.rng.uniform())
        far = 1.0 if float(x[0]) < 0.5 else 0.0
        if self.schedule == "convex":
            sign = -1.0 if far == 1.0 else 1.0
            c = sign * self.lipschitz * float(self.rng.uniform(0.5, 1.0))
            return make_linear_loss([c], lipschitz=self.lipschitz), g
        center = far if self.rng.random() < 0.7 else float(self.rng.uniform())
        return make_quadratic_loss([center], alpha=self.alpha, lipschitz=self.alpha), g
