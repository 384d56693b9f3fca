"""
Blum-Mansour swap engines over a discretized convex set

Each discretization point s owns an external-regret learner. Every round the
learners' recommendations become the rows of a row-stochastic matrix Q_t
(through a rounding procedure when they recommend points of K, directly when
they recommend distributions over the discretization). The engine plays the
stationary distribution x_t of Q_t and then updates learner s with the
revealed loss at scale x_t[s].

    bmcs    learners recommend in K, rows are H(q_{s,t})
    bmns    learners run multiplicative weights over the discretization

configure_from_table picks the discretization, epsilon, learner and rounding
for a loss class, dimension and horizon.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, InvalidInputError, NumericalError, UnsupportedDimensionError
from .geometry import (
    BoxBody,
    ConvexBody,
    Discretization,
    IntervalLocator,
    build_boundary_polytope,
    build_kuhn_triangulation,
    build_net,
    locate_simplex,
)
from .losses import LossSpec
from .oco import Gdk2Learner, MwuLearner, OgdLearner

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 2000
POWER_DAMPING = 1e-12
POWER_MAX_ITERATIONS = 200_000
DISTRIBUTION_TOLERANCE = 1e-9
ZERO_WEIGHT = 1e-15

ROUNDINGS = ("projection", "barycentric", "interval")
ALGORITHMS = ("bmcs", "bmns")


@dataclass(frozen=True, eq=False)
class MixedAction:
    """Finitely supported distribution over discretization points"""

    support: np.ndarray
    probabilities: np.ndarray
    points: Optional[np.ndarray] = None
    clamped: bool = False

    def __post_init__(self):
        if self.support.shape != self.probabilities.shape or self.support.ndim != 1:
            raise InvalidInputError("support and probabilities must be aligned 1-D arrays")
        if np.any(self.probabilities < 0):
            raise InvalidInputError("probabilities must be nonnegative")
        if abs(float(self.probabilities.sum()) - 1.0) > DISTRIBUTION_TOLERANCE:
            raise InvalidInputError(f"probabilities sum to {self.probabilities.sum()}, not 1")
        if np.unique(self.support).shape[0] != self.support.shape[0]:
            raise InvalidInputError("support indices must be distinct")

    @classmethod
    def from_dense(cls, dense: np.ndarray, points: Optional[np.ndarray] = None,
                   clamped: bool = False) -> "MixedAction":
        """Keep the nonzero entries of a dense probability vector"""
        dense = np.asarray(dense, dtype=float)
        support = np.flatnonzero(dense > ZERO_WEIGHT)
        probabilities = dense[support] / dense[support].sum()
        return cls(support=support, probabilities=probabilities,
                   points=None if points is None else points[support], clamped=clamped)

    @classmethod
    def from_weights(cls, indices, weights, points: Optional[np.ndarray] = None,
                     clamped: bool = False) -> "MixedAction":
        """Merge repeated indices and drop zero weights"""
        indices = np.asarray(indices, dtype=int)
        weights = np.asarray(weights, dtype=float)
        keep = weights > ZERO_WEIGHT
        support, inverse = np.unique(indices[keep], return_inverse=True)
        merged = np.zeros(support.shape[0])
        np.add.at(merged, inverse, weights[keep])
        merged /= merged.sum()
        return cls(support=support, probabilities=merged,
                   points=None if points is None else points[support], clamped=clamped)

    @classmethod
    def point_mass(cls, index: int, points: Optional[np.ndarray] = None) -> "MixedAction":
        support = np.array([int(index)])
        return cls(support=support, probabilities=np.ones(1),
                   points=None if points is None else points[support])

    def with_points(self, points: np.ndarray) -> "MixedAction":
        return MixedAction(self.support, self.probabilities, points[self.support], self.clamped)

    def dense(self, k: int) -> np.ndarray:
        out = np.zeros(k)
        out[self.support] = self.probabilities
        return out

    def mean(self) -> np.ndarray:
        if self.points is None:
            raise InvalidInputError("mixed action carries no point coordinates")
        return self.probabilities @ self.points

    def expected_loss(self, loss: LossSpec) -> float:
        if self.points is None:
            raise InvalidInputError("mixed action carries no point coordinates")
        return float(self.probabilities @ loss.values_at(self.points))

    def __len__(self) -> int:
        return self.support.shape[0]


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Row-stochastic matrix over the discretization, stored sparse"""

    matrix: sparse.csr_matrix

    def __post_init__(self):
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidInputError("Markov policy must be square")
        if self.matrix.nnz and self.matrix.data.min() < 0:
            raise InvalidInputError("Markov policy entries must be nonnegative")
        sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        if np.max(np.abs(sums - 1.0)) > DISTRIBUTION_TOLERANCE:
            raise InvalidInputError(f"row sums deviate from 1 by {np.max(np.abs(sums - 1.0)):.3g}")

    @classmethod
    def from_dense(cls, matrix) -> "MarkovPolicy":
        return cls(sparse.csr_matrix(np.asarray(matrix, dtype=float)))

    @classmethod
    def from_rows(cls, rows: List[MixedAction], k: int) -> "MarkovPolicy":
        row_index = np.concatenate([np.full(len(r), i) for i, r in enumerate(rows)])
        col_index = np.concatenate([r.support for r in rows])
        values = np.concatenate([r.probabilities for r in rows])
        return cls(sparse.csr_matrix((values, (row_index, col_index)), shape=(k, k)))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)


# ---------------------------------------------------------------------------
# Rounding procedures
# ---------------------------------------------------------------------------

def round_projection(q, disc: Discretization) -> MixedAction:
    """Point mass on the nearest discretization point (lowest index on ties)"""
    return MixedAction.point_mass(disc.nearest_index(q), disc.points)


def round_barycentric(q, disc: Discretization) -> MixedAction:
    """Mixture over the simplex containing the hull projection of q, with mean equal to it"""
    indices, weights = locate_simplex(q, disc)
    return MixedAction.from_weights(indices, weights, disc.points)


def round_interval(x, grid: Discretization) -> MixedAction:
    """Two-point mixture on the grid segment around x; x outside the grid is clamped"""
    if grid.dimension != 1:
        raise UnsupportedDimensionError("interval rounding needs a 1-D grid")
    knots = grid.points[:, 0]
    value = float(np.atleast_1d(x)[0])
    clamped = value < knots[0] or value > knots[-1]
    if clamped:
        logger.warning(f"Interval rounding clamped {value} into [{knots[0]}, {knots[-1]}]")
    locator = grid.locator if isinstance(grid.locator, IntervalLocator) else IntervalLocator(knots)
    indices, weights = locator.locate(np.array([value]))
    return MixedAction.from_weights(indices, weights, grid.points, clamped=clamped)


class RoundingProcedure:
    """H: K -> distributions over the discretization"""

    def __init__(self, tag: str, disc: Discretization):
        if tag not in ROUNDINGS:
            raise ConfigurationError(f"unknown rounding '{tag}' (known: {ROUNDINGS})")
        if tag in ("barycentric", "interval") and disc.simplices is None:
            raise ConfigurationError(f"'{tag}' rounding needs a discretization with simplices")
        if tag == "interval" and disc.dimension != 1:
            raise ConfigurationError("interval rounding needs a 1-D grid")
        self.tag = tag
        self.disc = disc

    def apply(self, q) -> MixedAction:
        if self.tag == "projection":
            return round_projection(q, self.disc)
        if self.tag == "barycentric":
            return round_barycentric(q, self.disc)
        return round_interval(q, self.disc)

    def apply_many(self, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows of (row, column, weight) triplets for a stack of recommendations"""
        if self.disc.dimension == 1 and self.tag in ("barycentric", "interval"):
            knots = self.disc.points[:, 0]
            values = np.clip(qs[:, 0], knots[0], knots[-1])
            if knots.shape[0] == 1:
                k = qs.shape[0]
                return np.arange(k), np.zeros(k, dtype=int), np.ones(k)
            left = np.clip(np.searchsorted(knots, values, side="right") - 1, 0, knots.shape[0] - 2)
            upper = (values - knots[left]) / (knots[left + 1] - knots[left])
            rows = np.repeat(np.arange(qs.shape[0]), 2)
            cols = np.stack([left, left + 1], axis=1).ravel()
            weights = np.stack([1.0 - upper, upper], axis=1).ravel()
            return rows, cols, weights
        rows, cols, weights = [], [], []
        for s, q in enumerate(qs):
            action = self.apply(q)
            rows.append(np.full(len(action), s))
            cols.append(action.support)
            weights.append(action.probabilities)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)


# ---------------------------------------------------------------------------
# Stationary distribution
# ---------------------------------------------------------------------------

def _solve_irreducible(block: np.ndarray) -> np.ndarray:
    """x Q = x, sum x = 1 for an irreducible block via the normalization row"""
    n = block.shape[0]
    if n == 1:
        return np.ones(1)
    system = block.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(system, rhs, rcond=None)[0]


def _class_decomposition(dense: np.ndarray) -> np.ndarray:
    """
    Stationary distribution reached from the uniform start.

    Each closed communicating class gets its own stationary law, weighted by
    the probability that a uniformly started chain is absorbed there. Identity
    chains therefore give the uniform distribution.
    """
    k = dense.shape[0]
    n_classes, labels = connected_components(sparse.csr_matrix(dense), directed=True,
                                             connection="strong")
    if n_classes == 1:
        return _solve_irreducible(dense)
    rows, cols = np.nonzero(dense)
    leaks = labels[rows] != labels[cols]
    open_classes = set(labels[rows[leaks]].tolist())
    closed = [c for c in range(n_classes) if c not in open_classes]
    transient = np.flatnonzero(np.isin(labels, list(open_classes)))

    absorption = np.zeros((k, len(closed)))
    for j, c in enumerate(closed):
        absorption[labels == c, j] = 1.0
    if transient.size:
        to_closed = np.stack([dense[np.ix_(transient, np.flatnonzero(labels == c))].sum(axis=1)
                              for c in closed], axis=1)
        inner = np.eye(transient.size) - dense[np.ix_(transient, transient)]
        absorption[transient] = np.linalg.solve(inner, to_closed)

    weights = absorption.mean(axis=0)
    x = np.zeros(k)
    for j, c in enumerate(closed):
        members = np.flatnonzero(labels == c)
        x[members] = weights[j] * _solve_irreducible(dense[np.ix_(members, members)])
    logger.debug(f"Reducible chain: {n_classes} classes, {len(closed)} closed")
    return x


def _damped_power_iteration(matrix: sparse.csr_matrix, tol: float) -> np.ndarray:
    """Lazy, slightly damped chain iterated from the uniform start"""
    k = matrix.shape[0]
    x = np.full(k, 1.0 / k)
    transpose = matrix.T.tocsr()
    residual = math.inf
    for iteration in range(1, POWER_MAX_ITERATIONS + 1):
        step = (1.0 - POWER_DAMPING) * (0.5 * x + 0.5 * (transpose @ x)) + POWER_DAMPING / k
        residual = float(np.abs(step - x).sum())
        x = step
        if residual <= tol / 10.0:
            return x
    raise NumericalError(f"power iteration did not converge in {POWER_MAX_ITERATIONS} steps",
                         diagnostics={"iterations": POWER_MAX_ITERATIONS, "residual": residual,
                                      "size": k})


def stationary_distribution(Q: MarkovPolicy, tol: float = DISTRIBUTION_TOLERANCE) -> MixedAction:
    """x with x Q = x; reducible chains resolve to the limit reached from the uniform start"""
    k = Q.size
    if k <= DIRECT_SOLVE_LIMIT:
        x = _class_decomposition(Q.matrix.toarray())
    else:
        x = _damped_power_iteration(Q.matrix, tol)
    x = np.where(x < 0, np.where(x > -1e-10, 0.0, x), x)
    if np.any(x < 0) or not np.all(np.isfinite(x)) or x.sum() <= 0:
        raise NumericalError("stationary solve produced an invalid distribution",
                             diagnostics={"min": float(np.nanmin(x)), "size": k})
    x /= x.sum()
    residual = float(np.abs(Q.matrix.T @ x - x).sum())
    if residual > tol:
        raise NumericalError(f"stationary residual {residual:.3g} exceeds {tol:.3g}",
                             diagnostics={"residual": residual, "size": k, "nnz": Q.nnz})
    return MixedAction.from_dense(x)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngineConfig:
    """Everything needed to build a swap engine for one run"""

    algorithm: str
    discretizer: str
    epsilon: float
    subroutine: str
    rounding: Optional[str]
    exponent: float
    loss_class: str
    dimension: int
    horizon: int
    row: str

    def to_dict(self) -> Dict:
        return {
            "algorithm": self.algorithm, "discretizer": self.discretizer,
            "epsilon": self.epsilon, "subroutine": self.subroutine, "rounding": self.rounding,
            "exponent": self.exponent, "loss_class": self.loss_class,
            "dimension": self.dimension, "horizon": self.horizon, "row": self.row,
        }


TABLE_ALIASES = {
    "general": "general",
    "smooth": "smooth",
    "concave": "concave-or-linear",
    "linear": "concave-or-linear",
    "concave-or-linear": "concave-or-linear",
    "strongly-convex": "strongly-convex",
    "sc-smooth": "sc-smooth",
}


def configure_from_table(loss_class: str, d: int, T: int, lipschitz: float = 1.0,
                         alpha: float = 1.0) -> EngineConfig:
    """Discretization, epsilon, learner, rounding and predicted regret exponent for a loss class"""
    if loss_class not in TABLE_ALIASES:
        raise ConfigurationError(f"no full-swap configuration for loss class '{loss_class}' "
                                 f"(known: {sorted(TABLE_ALIASES)})")
    if T < 1 or d < 1:
        raise ConfigurationError(f"horizon and dimension must be positive, got T={T}, d={d}")
    row = TABLE_ALIASES[loss_class]
    if row == "general":
        params = ("bmns", "net", T ** (-1.0 / (d + 2)), "mwu", None, (d + 1) / (d + 2))
    elif row == "smooth":
        params = ("bmns", "triangulation", T ** (-1.0 / (d + 4)), "mwu", None, (d + 2) / (d + 4))
    elif row == "concave-or-linear":
        params = ("bmns", "boundary-polytope", T ** (-1.0 / (d + 3)), "mwu", None,
                  (d + 1) / (d + 3))
    elif row == "strongly-convex":
        if alpha <= 0:
            raise ConfigurationError("strongly convex row needs alpha > 0")
        eps = (lipschitz / alpha) ** (1.0 / (d + 1)) * T ** (-1.0 / (d + 1))
        params = ("bmcs", "net", eps, "gds", "projection", d / (d + 1))
    else:
        params = ("bmcs", "triangulation", T ** (-1.0 / (d + 2)), "gds", "barycentric",
                  d / (d + 2))
    algorithm, discretizer, eps, subroutine, rounding, exponent = params
    config = EngineConfig(algorithm=algorithm, discretizer=discretizer, epsilon=float(eps),
                          subroutine=subroutine, rounding=rounding, exponent=float(exponent),
                          loss_class=loss_class, dimension=d, horizon=T, row=row)
    logger.info(f"Configuration for {loss_class} (d={d}, T={T}): {discretizer}, "
                f"eps={eps:.4g}, {algorithm}/{subroutine}, exponent {exponent:.4g}")
    return config


def build_discretization(body: ConvexBody, kind: str, epsilon: float) -> Discretization:
    """Discretize body with the constructor for kind; epsilon is capped at the body's extent"""
    if isinstance(body, BoxBody):
        epsilon = min(epsilon, float(np.min(body.hi - body.lo)) * math.sqrt(body.dimension))
    if kind == "net":
        return build_net(body, epsilon)
    if kind == "triangulation":
        return build_kuhn_triangulation(body, epsilon)
    if kind == "boundary-polytope":
        disc = build_boundary_polytope(body, epsilon, allow_relaxed=True)
        if disc.relaxed:
            logger.warning(f"Boundary polytope built with relaxed epsilon {epsilon:.4g}")
        return disc
    raise ConfigurationError(f"unknown discretizer '{kind}'")


def decomposition_delta(config: EngineConfig, lipschitz: float, beta: float) -> float:
    """Per-round rounding loss bound delta used by the regret decomposition"""
    eps = config.epsilon
    if config.subroutine == "gdk2":
        return 0.0
    if config.discretizer == "net":
        return lipschitz * eps
    if config.discretizer == "boundary-polytope":
        return lipschitz * eps ** 2
    smooth = beta if math.isfinite(beta) else 0.0
    return (lipschitz + smooth / 8.0) * eps ** 2


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass
class RoundRecord:
    """What the engine did in one round, kept for independent regret accounting"""

    t: int
    probabilities: np.ndarray
    recommendations: np.ndarray
    loss: Optional[LossSpec] = None
    surrogate: Optional[LossSpec] = None
    q_nnz: int = 0
    learning_rates: Dict[int, float] = field(default_factory=dict)


class SwapEngine:
    """Sequential full-swap-regret learner over a discretization"""

    def __init__(self, disc: Discretization, algorithm: str, learner_factory: Callable[[], object],
                 rounding: Optional[RoundingProcedure] = None, config: Optional[EngineConfig] = None,
                 record: bool = False):
        if algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm '{algorithm}' (known: {ALGORITHMS})")
        if algorithm == "bmcs" and rounding is None:
            raise ConfigurationError("bmcs needs a rounding procedure")
        if algorithm == "bmns" and rounding is not None:
            raise ConfigurationError("bmns learners recommend distributions; no rounding applies")
        self.disc = disc
        self.algorithm = algorithm
        self.learner_factory = learner_factory
        self.rounding = rounding
        self.config = config
        self.record = record
        self.learners: Dict[int, object] = {}
        self.prototype = learner_factory()
        if algorithm == "bmns" and not isinstance(self.prototype, MwuLearner):
            raise ConfigurationError("bmns needs learners over the discretization")
        if algorithm == "bmcs" and isinstance(self.prototype, MwuLearner):
            raise ConfigurationError("bmcs needs learners that recommend points of the body")
        self.t = 0
        self.trace: List[RoundRecord] = []
        self._pending: Optional[Tuple[np.ndarray, np.ndarray, int]] = None

    @property
    def size(self) -> int:
        return self.disc.size

    def regret_bound(self) -> float:
        """Sum of the per-learner guarantees at their cumulative scales; unplayed learners add 0"""
        return float(sum(learner.regret_bound() for learner in self.learners.values()))

    def _recommendations(self) -> np.ndarray:
        initial = self.prototype.recommend()
        recs = np.repeat(initial[None, :], self.size, axis=0)
        for s, learner in self.learners.items():
            recs[s] = learner.recommend()
        return recs

    def policy(self) -> Tuple[MarkovPolicy, np.ndarray]:
        """Q_t and the recommendations it was built from"""
        k = self.size
        recs = self._recommendations()
        if self.algorithm == "bmcs":
            rows, cols, weights = self.rounding.apply_many(recs)
            keep = weights > ZERO_WEIGHT
            matrix = sparse.csr_matrix((weights[keep], (rows[keep], cols[keep])), shape=(k, k))
        else:
            matrix = sparse.csr_matrix(recs)
        return MarkovPolicy(matrix), recs

    def next_action(self) -> MixedAction:
        Q, recs = self.policy()
        action = stationary_distribution(Q).with_points(self.disc.points)
        self._pending = (action.dense(self.size), recs, Q.nnz)
        return action

    def observe(self, loss: LossSpec):
        if self._pending is None:
            raise ConfigurationError("observe() called before next_action()")
        probabilities, recs, nnz = self._pending
        self._pending = None
        surrogate = self.prototype.surrogate(loss)
        values = surrogate.values_at(self.disc.points) if self.algorithm == "bmns" else None
        rates: Dict[int, float] = {}
        for s in np.flatnonzero(probabilities > 0):
            s = int(s)
            learner = self.learners.get(s)
            if learner is None:
                learner = self.learners[s] = self.learner_factory()
            g = float(probabilities[s])
            if values is not None:
                learner.update_values(values, g)
                rates[s] = learner.state.learning_rate()
            else:
                learner.update(surrogate, g)
                rates[s] = learner.state.eta
        self.t += 1
        if self.record:
            self.trace.append(RoundRecord(t=self.t, probabilities=probabilities,
                                          recommendations=recs, loss=loss, surrogate=surrogate,
                                          q_nnz=nnz, learning_rates=rates))

    def write_trace(self, path) -> str:
        """Per-round trace CSV: t, support, probabilities, Q nonzeros, mean learning rate"""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "support", "probabilities", "q_nnz", "mean_eta", "active_learners"])
            for r in self.trace:
                support = np.flatnonzero(r.probabilities > 0)
                eta = float(np.mean(list(r.learning_rates.values()))) if r.learning_rates else 0.0
                writer.writerow([r.t, " ".join(map(str, support)),
                                 " ".join(f"{p:.12g}" for p in r.probabilities[support]),
                                 r.q_nnz, f"{eta:.12g}", len(r.learning_rates)])
        logger.info(f"Engine trace ({len(self.trace)} rounds) written to: {path}")
        return str(path)

    @classmethod
    def from_config(cls, config: EngineConfig, body: ConvexBody, lipschitz: float,
                    alpha: float = 0.0, loss_range: Optional[float] = None,
                    disc: Optional[Discretization] = None, mwu_eta: Optional[float] = None,
                    record: bool = False) -> "SwapEngine":
        """Build discretization, learners and rounding for a configuration"""
        disc = disc if disc is not None else build_discretization(body, config.discretizer,
                                                                  config.epsilon)
        x0 = disc.points.mean(axis=0)
        rounding = None
        if config.subroutine == "mwu":
            span = loss_range if loss_range is not None else lipschitz * max(body.diameter_bound, 1e-12)
            factory = lambda: MwuLearner(disc.points, eta=mwu_eta, loss_range=span)
        elif config.subroutine == "gdk2":
            factory = lambda: Gdk2Learner(disc, lipschitz, alpha, x0=x0)
        elif config.subroutine in ("gds", "gdk", "convex"):
            schedule = config.subroutine
            eps = config.epsilon if schedule == "gdk" else 0.0
            factory = lambda: OgdLearner(body, schedule, lipschitz, alpha, eps, x0=x0)
        else:
            raise ConfigurationError(f"unknown subroutine '{config.subroutine}'")
        if config.algorithm == "bmcs":
            rounding = RoundingProcedure(config.rounding or "projection", disc)
        logger.info(f"Swap engine: {config.algorithm}/{config.subroutine} on {disc.size} points "
                    f"({disc.kind}, eps={disc.epsilon:.4g})")
        return cls(disc, config.algorithm, factory, rounding, config, record)


def bm_round(engine: SwapEngine, loss: LossSpec) -> Tuple[MixedAction, SwapEngine]:
    """Play one round: compute x_t, reveal loss, update the learners"""
    action = engine.next_action()
    engine.observe(loss)
    return action, engine
