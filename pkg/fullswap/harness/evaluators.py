"""
Independent regret evaluators

These recompute every reported regret from the plays and losses alone; they
never read the engine's learner state. The inner minimization
min_{y in K} sum_t w_t l_t(y) is done

    in closed form    isotropic quadratic families (projection, linear minimizer, farthest point)
    at the knots      piecewise-linear losses sharing one grid
    by search         a 10^4-point grid plus bounded refinement (d = 1),
                      16-start projected subgradient (d = 2, 3)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import ConfigurationError, InvalidInputError, UnsupportedEvaluationError
from ..geometry import BallBody, BoxBody, ConvexBody, PolytopeBody, as_point
from ..losses import LossSpec
from ..swap_engine import MixedAction, SwapEngine, decomposition_delta

logger = logging.getLogger(__name__)

SEARCH_GRID_POINTS = 10_000
REFINE_TOLERANCE = 1e-10
MULTI_START_COUNT = 16
MULTI_START_ITERATIONS = 400
POINT_KEY_DIGITS = 12


def _farthest_point(body: ConvexBody, p: np.ndarray) -> np.ndarray:
    """argmax_{y in K} |y - p|"""
    if isinstance(body, BoxBody):
        return np.where(p - body.lo >= body.hi - p, body.lo, body.hi)
    if isinstance(body, BallBody):
        direction = body.center() - p
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            direction, norm = np.eye(body.dimension)[0], 1.0
        return body.center() + body.radius * direction / norm
    if isinstance(body, PolytopeBody):
        return body.vertices[int(np.argmax(np.linalg.norm(body.vertices - p, axis=1)))].copy()
    raise UnsupportedEvaluationError(f"no concave minimizer for body family '{body.family}'")


def minimize_quadratic(a: float, c: np.ndarray, k: float, body: ConvexBody) -> Tuple[np.ndarray, float]:
    """argmin and min of a|y|^2 + <c, y> + k over body"""
    if a > 0:
        y = body.project(-c / (2.0 * a))
    elif a == 0:
        y = body.linear_minimizer(c)
    else:
        y = _farthest_point(body, -c / (2.0 * a))
    return y, float(a * np.dot(y, y) + np.dot(c, y) + k)


class ComparatorSum:
    """Running sum_t w_t l_t(y) that can be minimized over a body"""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self.weight = 0.0
        self.terms: List[Tuple[float, LossSpec]] = []
        self.a = 0.0
        self.c = np.zeros(dimension)
        self.k = 0.0
        self.all_quadratic = True
        self.knots: Optional[np.ndarray] = None
        self.knot_values: Optional[np.ndarray] = None
        self.shared_knots = True

    def add(self, loss: LossSpec, w: float):
        if w <= 0:
            return
        self.weight += w
        self.terms.append((w, loss))
        form = loss.quadratic
        if form is not None:
            self.a += w * form.a
            self.c += w * np.asarray(form.c, dtype=float)
            self.k += w * form.k
        else:
            self.all_quadratic = False
        if loss.knots is None or not self.shared_knots:
            self.shared_knots = False
            return
        if self.knots is None:
            self.knots = loss.knots
            self.knot_values = np.zeros(loss.knots.shape[0])
        elif loss.knots.shape != self.knots.shape or not np.array_equal(loss.knots, self.knots):
            self.shared_knots = False
            return
        self.knot_values += w * loss.values_at(self.knots[:, None])

    def value(self, y) -> float:
        y = as_point(y, self.dimension)
        if self.all_quadratic:
            return float(self.a * np.dot(y, y) + np.dot(self.c, y) + self.k)
        return float(sum(w * loss.value(y) for w, loss in self.terms))

    def values(self, points: np.ndarray) -> np.ndarray:
        if self.all_quadratic:
            return self.a * np.einsum("ij,ij->i", points, points) + points @ self.c + self.k
        total = np.zeros(points.shape[0])
        for w, loss in self.terms:
            total += w * loss.values_at(points)
        return total

    def _lipschitz(self) -> float:
        return float(sum(w * loss.lipschitz for w, loss in self.terms))

    def minimize(self, body: ConvexBody) -> Tuple[np.ndarray, float]:
        if self.weight == 0.0:
            return body.center(), 0.0
        if self.all_quadratic:
            return minimize_quadratic(self.a, self.c, self.k, body)
        if self.dimension == 1:
            if self.shared_knots and self.knots is not None:
                return self._minimize_at_knots(body)
            return self._minimize_search_1d(body)
        if self.dimension in (2, 3):
            return self._minimize_multi_start(body)
        raise UnsupportedEvaluationError(
            f"no inner minimizer for non-quadratic losses in dimension {self.dimension}")

    def _minimize_at_knots(self, body: ConvexBody) -> Tuple[np.ndarray, float]:
        lo, hi = body.bounding_box()
        inside = (self.knots >= lo[0]) & (self.knots <= hi[0])
        candidates = [(float(v), float(s)) for s, v in zip(self.knots[inside], self.knot_values[inside])]
        for end in (float(lo[0]), float(hi[0])):
            if not np.any(np.abs(self.knots - end) <= 1e-12):
                candidates.append((self.value([end]), end))
        value, point = min(candidates)
        return np.array([point]), value

    def _minimize_search_1d(self, body: ConvexBody) -> Tuple[np.ndarray, float]:
        lo, hi = (float(v[0]) for v in body.bounding_box())
        grid = np.linspace(lo, hi, SEARCH_GRID_POINTS)
        values = self.values(grid[:, None])
        best = int(np.argmin(values))
        left, right = grid[max(best - 1, 0)], grid[min(best + 1, grid.shape[0] - 1)]
        point, value = float(grid[best]), float(values[best])
        if right > left:
            refined = minimize_scalar(lambda y: self.value([y]), bounds=(left, right),
                                      method="bounded", options={"xatol": REFINE_TOLERANCE})
            if refined.success and refined.fun < value:
                point, value = float(refined.x), float(refined.fun)
        return np.array([point]), value

    def _minimize_multi_start(self, body: ConvexBody) -> Tuple[np.ndarray, float]:
        rng = np.random.default_rng(0)
        starts = np.vstack([body.center()[None, :], body.sample(rng, MULTI_START_COUNT - 1)])
        scale = max(body.diameter_bound, 1e-12) / max(self._lipschitz(), 1e-12)
        best_point, best_value = body.center(), self.value(body.center())
        for start in starts:
            y = body.project(start)
            for iteration in range(1, MULTI_START_ITERATIONS + 1):
                value = self.value(y)
                if value < best_value:
                    best_point, best_value = y.copy(), value
                gradient = sum(w * loss.subgradient(y) for w, loss in self.terms)
                y = body.project(y - scale / math.sqrt(iteration) * gradient)
        return best_point, best_value


def _point_key(point: np.ndarray) -> Tuple[float, ...]:
    return tuple(np.round(np.asarray(point, dtype=float), POINT_KEY_DIGITS).tolist())


@dataclass
class PointAccount:
    point: np.ndarray
    played: float = 0.0
    comparator: Optional[ComparatorSum] = None


class FullSwapAccumulator:
    """Streaming full swap regret: one account per point ever played"""

    def __init__(self, body: ConvexBody):
        self.body = body
        self.accounts: Dict[Tuple[float, ...], PointAccount] = {}
        self.rounds = 0

    def add_round(self, action: MixedAction, loss: LossSpec):
        if action.points is None:
            raise InvalidInputError("plays must carry their point coordinates")
        values = loss.values_at(action.points)
        for p, point, value in zip(action.probabilities, action.points, values):
            key = _point_key(point)
            account = self.accounts.get(key)
            if account is None:
                account = self.accounts[key] = PointAccount(point=np.asarray(point, dtype=float),
                                                            comparator=ComparatorSum(self.body.dimension))
            account.played += float(p) * float(value)
            account.comparator.add(loss, float(p))
        self.rounds += 1

    def breakdown(self) -> Dict[Tuple[float, ...], float]:
        """Per-point regret sum_t x_t[s] l_t(s) - min_y sum_t x_t[s] l_t(y)"""
        return {key: account.played - account.comparator.minimize(self.body)[1]
                for key, account in self.accounts.items()}

    def total(self) -> float:
        return float(sum(self.breakdown().values()))


def _check_aligned(plays: Sequence, losses: Sequence):
    if len(plays) != len(losses):
        raise InvalidInputError(f"{len(plays)} plays but {len(losses)} losses")


def full_swap_regret_eval(plays: Sequence[MixedAction], losses: Sequence[LossSpec],
                          body: ConvexBody) -> float:
    """sum_s [sum_t x_t[s] l_t(s) - min_{y in K} sum_t x_t[s] l_t(y)]"""
    _check_aligned(plays, losses)
    accumulator = FullSwapAccumulator(body)
    for action, loss in zip(plays, losses):
        accumulator.add_round(action, loss)
    return accumulator.total()


def full_swap_regret_grid(plays: Sequence[MixedAction], losses: Sequence[LossSpec],
                          body: ConvexBody, grid_points: int = SEARCH_GRID_POINTS) -> float:
    """Same quantity with the comparator restricted to a uniform grid over a 1-D body"""
    _check_aligned(plays, losses)
    if body.dimension != 1:
        raise UnsupportedEvaluationError("grid comparators are only available for d = 1")
    lo, hi = (float(v[0]) for v in body.bounding_box())
    grid = np.linspace(lo, hi, grid_points)[:, None]
    accumulator = FullSwapAccumulator(body)
    for action, loss in zip(plays, losses):
        accumulator.add_round(action, loss)
    return float(sum(account.played - float(np.min(account.comparator.values(grid)))
                     for account in accumulator.accounts.values()))


def full_swap_regret_discrete(plays: Sequence[MixedAction], losses: Sequence[LossSpec],
                              candidates: np.ndarray) -> float:
    """Full swap regret against a finite comparator set"""
    _check_aligned(plays, losses)
    candidates = np.atleast_2d(candidates)
    played: Dict[Tuple[float, ...], float] = {}
    against: Dict[Tuple[float, ...], np.ndarray] = {}
    for action, loss in zip(plays, losses):
        values = loss.values_at(action.points)
        candidate_values = loss.values_at(candidates)
        for p, point, value in zip(action.probabilities, action.points, values):
            key = _point_key(point)
            played[key] = played.get(key, 0.0) + p * value
            against[key] = against.get(key, np.zeros(candidates.shape[0])) + p * candidate_values
    return float(sum(played[key] - float(np.min(against[key])) for key in played))


def scaled_regret_series(plays: Sequence[np.ndarray], losses: Sequence[LossSpec],
                         scales: Sequence[float], body: ConvexBody) -> np.ndarray:
    """Prefix scaled external regret sum_{s<=t} g_s (l_s(x_s) - l_s(y*_t))"""
    _check_aligned(plays, losses)
    if len(scales) != len(losses):
        raise InvalidInputError(f"{len(scales)} scales but {len(losses)} losses")
    comparator = ComparatorSum(body.dimension)
    incurred = 0.0
    series = np.zeros(len(losses))
    for t, (x, loss, g) in enumerate(zip(plays, losses, scales)):
        incurred += g * loss.value(x)
        comparator.add(loss, g)
        series[t] = incurred - comparator.minimize(body)[1]
    return series


@dataclass
class DecompositionResult:
    """delta T + sum_s Reg_s measured from the recorded engine trace"""

    delta: float
    delta_T: float
    sum_reg_s: float
    per_point: Dict[int, float] = field(default_factory=dict)
    series: List[Tuple[int, float, float]] = field(default_factory=list)

    @property
    def bound(self) -> float:
        return self.delta_T + self.sum_reg_s


def decomposition_eval(engine: SwapEngine, lipschitz: float, beta: float = math.inf,
                       checkpoints: Optional[Sequence[int]] = None) -> DecompositionResult:
    """
    Recompute the per-learner scaled regrets from the engine's recorded trace.

    bmns learners are compared with the best discretization point, bmcs
    learners with the best point of their own domain, on the losses they
    were actually fed.
    """
    if not engine.trace:
        raise ConfigurationError("engine was not run with record=True")
    if engine.config is None:
        raise ConfigurationError("engine has no configuration to derive delta from")
    delta = decomposition_delta(engine.config, lipschitz, beta)
    disc = engine.disc
    k, d = disc.size, disc.dimension
    wanted = set(checkpoints or [engine.trace[-1].t])
    series: List[Tuple[int, float, float]] = []

    if engine.algorithm == "bmns":
        played = np.zeros(k)
        cumulative = np.zeros((k, k))
        for record in engine.trace:
            values = record.surrogate.values_at(disc.points)
            g = record.probabilities
            played += g * (record.recommendations @ values)
            cumulative += np.outer(g, values)
            if record.t in wanted:
                regrets = played - cumulative.min(axis=1)
                series.append((record.t, delta * record.t, float(regrets.sum())))
    else:
        domain = engine.prototype.state.body
        played = np.zeros(k)
        comparators = [ComparatorSum(domain.dimension) for _ in range(k)]
        for record in engine.trace:
            for s in np.flatnonzero(record.probabilities > 0):
                g = float(record.probabilities[s])
                played[s] += g * record.surrogate.value(record.recommendations[s])
                comparators[s].add(record.surrogate, g)
            if record.t in wanted:
                regrets = played - np.array([c.minimize(domain)[1] for c in comparators])
                series.append((record.t, delta * record.t, float(regrets.sum())))

    final_t = engine.trace[-1].t
    if engine.algorithm == "bmns":
        regrets = played - cumulative.min(axis=1)
    else:
        regrets = played - np.array([c.minimize(domain)[1] for c in comparators])
    per_point = {int(s): float(r) for s, r in enumerate(regrets) if r != 0.0}
    logger.debug(f"Decomposition over {final_t} rounds on {k} points (d={d}): delta={delta:.4g}")
    return DecompositionResult(delta=delta, delta_T=delta * final_t, sum_reg_s=float(regrets.sum()),
                               per_point=per_point, series=series)


def checkpoint_rounds(T: int, count: int = 50) -> List[int]:
    """Log-spaced rounds in [1, T], always ending with T"""
    if T < 1:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    points = np.unique(np.round(np.geomspace(1, T, num=min(count, T))).astype(int))
    rounds = [int(t) for t in points if 1 <= t <= T]
    if rounds[-1] != T:
        rounds.append(T)
    return rounds
