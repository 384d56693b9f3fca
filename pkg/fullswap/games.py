"""
Structured games and the reduction from swap regret to full swap regret

A structured game gives every learner action i an embedding v_i and every
adversary action j an embedding w_j with u_L(i, j) = <v_i, w_j>. A learner
with low full swap regret over conv(v_1..v_n) under the linear losses
-<x, y_t> has low swap regret in the game once its mixed points are mapped
back to distributions over actions by the convex decomposition oracle.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog

from .errors import InfeasibleError, InvalidInputError, NumericalError
from .geometry import PolytopeBody, as_point, build_boundary_polytope
from .losses import LossSpec, make_linear_loss
from .swap_engine import MixedAction, SwapEngine, configure_from_table

logger = logging.getLogger(__name__)

NORM_SLACK = 1e-12
DECOMPOSE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class StructuredGame:
    """Embeddings with u_L(i, j) = <v_i, w_j> and optional u_A(i, j) = <v'_i, w'_j>"""

    v: np.ndarray
    w: np.ndarray
    v_prime: Optional[np.ndarray] = None
    w_prime: Optional[np.ndarray] = None
    scale: float = 1.0
    adversary_scale: float = 1.0
    norm_bound: float = 1.0

    def __post_init__(self):
        v, w = np.atleast_2d(self.v), np.atleast_2d(self.w)
        object.__setattr__(self, "v", v.astype(float))
        object.__setattr__(self, "w", w.astype(float))
        if v.shape[1] != w.shape[1]:
            raise InvalidInputError(f"embedding dimensions differ: {v.shape[1]} vs {w.shape[1]}")
        if (self.v_prime is None) != (self.w_prime is None):
            raise InvalidInputError("adversary embeddings must be given together")
        if self.v_prime is not None:
            vp, wp = np.atleast_2d(self.v_prime).astype(float), np.atleast_2d(self.w_prime).astype(float)
            if vp.shape[0] != v.shape[0] or wp.shape[0] != w.shape[0] or vp.shape[1] != wp.shape[1]:
                raise InvalidInputError("adversary embeddings do not match the action counts")
            object.__setattr__(self, "v_prime", vp)
            object.__setattr__(self, "w_prime", wp)
        for name in ("v", "w", "v_prime", "w_prime"):
            emb = getattr(self, name)
            if emb is not None and np.max(np.linalg.norm(emb, axis=1)) > self.norm_bound + NORM_SLACK:
                raise InvalidInputError(f"embedding '{name}' has norm above {self.norm_bound}")

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def n_adversary(self) -> int:
        return self.w.shape[0]

    @property
    def dimension(self) -> int:
        return self.v.shape[1]

    def learner_utility(self) -> np.ndarray:
        return self.v @ self.w.T

    def adversary_utility(self) -> np.ndarray:
        """u_A; zero-sum when no adversary embeddings are given"""
        if self.v_prime is None:
            return -self.learner_utility()
        return self.v_prime @ self.w_prime.T

    def player_view(self, role: str) -> Tuple[np.ndarray, np.ndarray]:
        """(own action embeddings, opponent embeddings) with own utility <own_a, opp_b>"""
        if role == "learner":
            return self.v, self.w
        if role == "adversary":
            if self.v_prime is None:
                return self.w, -self.v
            return self.w_prime, self.v_prime
        raise InvalidInputError(f"unknown role '{role}'")

    def to_json(self) -> Dict:
        document = {"v": self.v.tolist(), "w": self.w.tolist(), "scale": self.scale}
        if self.v_prime is not None:
            document.update({"v_prime": self.v_prime.tolist(), "w_prime": self.w_prime.tolist(),
                             "adversary_scale": self.adversary_scale})
        return document

    @classmethod
    def from_json(cls, document: Dict) -> "StructuredGame":
        try:
            return cls(v=np.asarray(document["v"], dtype=float),
                       w=np.asarray(document["w"], dtype=float),
                       v_prime=None if document.get("v_prime") is None
                       else np.asarray(document["v_prime"], dtype=float),
                       w_prime=None if document.get("w_prime") is None
                       else np.asarray(document["w_prime"], dtype=float),
                       scale=float(document.get("scale", 1.0)),
                       adversary_scale=float(document.get("adversary_scale", 1.0)))
        except KeyError as e:
            raise InvalidInputError(f"game document is missing {e}") from e


def load_game_json(path) -> StructuredGame:
    with open(path, "r") as f:
        return StructuredGame.from_json(json.load(f))


def load_normal_form_csv(learner_path, adversary_path=None) -> StructuredGame:
    """Payoff matrices as headerless CSV files (rows: learner actions)"""
    U_L = pd.read_csv(learner_path, header=None).to_numpy(dtype=float)
    U_A = None if adversary_path is None else pd.read_csv(adversary_path, header=None).to_numpy(dtype=float)
    return nfg_to_structured(U_L, U_A)


def _check_distribution(p, size: int, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if p.shape[0] != size:
        raise InvalidInputError(f"{what} has length {p.shape[0]}, expected {size}")
    if np.any(p < -DECOMPOSE_TOLERANCE) or abs(p.sum() - 1.0) > DECOMPOSE_TOLERANCE:
        raise InvalidInputError(f"{what} is not a probability vector")
    return p


def embed(p, game: StructuredGame) -> np.ndarray:
    """pi(p) = sum_i p_i v_i"""
    return _check_distribution(p, game.n, "learner strategy") @ game.v


def embed_adversary(q, game: StructuredGame) -> np.ndarray:
    """pi'(q) = sum_j q_j w_j"""
    return _check_distribution(q, game.n_adversary, "adversary strategy") @ game.w


def _caratheodory_reduce(weights: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Pivot along null-space directions until the support is affinely independent"""
    weights = weights.copy()
    while True:
        support = np.flatnonzero(weights > 0)
        lifted = np.vstack([vertices[support].T, np.ones(support.shape[0])])
        if support.shape[0] <= np.linalg.matrix_rank(lifted):
            return weights
        direction = np.linalg.svd(lifted)[2][-1]
        if not np.any(direction > 1e-14):
            direction = -direction
        positive = direction > 1e-14
        ratios = np.full(direction.shape[0], np.inf)
        ratios[positive] = weights[support][positive] / direction[positive]
        pivot = int(np.argmin(ratios))
        weights[support] -= ratios[pivot] * direction
        weights[support[pivot]] = 0.0
        weights[weights < 1e-15] = 0.0


def convex_decompose(x, vertices) -> np.ndarray:
    """
    Weights lambda >= 0, sum 1, with sum_i lambda_i v_i = x and at most d+1 nonzeros.

    A vertex solution of a feasibility LP (lexicographic objective so repeated
    calls agree) is reduced further by Caratheodory pivoting. Points outside
    the hull raise InfeasibleError carrying a separating direction h with
    <h, x> > max_i <h, v_i>.
    """
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    n, d = vertices.shape
    x = as_point(x, d)
    hits = np.flatnonzero(np.linalg.norm(vertices - x, axis=1) <= DECOMPOSE_TOLERANCE)
    if hits.size:
        weights = np.zeros(n)
        weights[hits[0]] = 1.0
        return weights
    A_eq = np.vstack([vertices.T, np.ones(n)])
    b_eq = np.append(x, 1.0)
    result = linprog(c=np.arange(1, n + 1, dtype=float), A_eq=A_eq, b_eq=b_eq,
                     bounds=[(0, None)] * n, method="highs")
    if result.status == 2:
        projection = PolytopeBody(vertices).project(x)
        gap = float(np.linalg.norm(x - projection))
        if gap > DECOMPOSE_TOLERANCE:
            raise InfeasibleError(f"point lies {gap:.3g} outside the hull",
                                  certificate=(x - projection) / gap)
        return convex_decompose(projection, vertices)
    if result.status != 0:
        raise NumericalError(f"decomposition LP failed: {result.message}",
                             diagnostics={"status": int(result.status)})
    weights = np.clip(result.x, 0.0, None)
    weights = _caratheodory_reduce(weights / weights.sum(), vertices)
    return weights / weights.sum()


@dataclass
class GameTranscript:
    """Per-round mixed strategies and their embeddings"""

    learner: List[np.ndarray] = field(default_factory=list)
    adversary: List[np.ndarray] = field(default_factory=list)
    x: List[np.ndarray] = field(default_factory=list)
    y: List[np.ndarray] = field(default_factory=list)

    def append(self, p: np.ndarray, q: np.ndarray, game: StructuredGame):
        self.learner.append(np.asarray(p, dtype=float))
        self.adversary.append(np.asarray(q, dtype=float))
        self.x.append(embed(p, game))
        self.y.append(embed_adversary(q, game))

    def __len__(self) -> int:
        return len(self.learner)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.learner:
            raise InvalidInputError("transcript has no rounds")
        return np.stack(self.learner), np.stack(self.adversary)

    def joint_distribution(self) -> np.ndarray:
        """Average over rounds of the product p_t q_t^T"""
        P, Q = self.arrays()
        return P.T @ Q / P.shape[0]


def _swap_gains(P: np.ndarray, payoffs: np.ndarray) -> np.ndarray:
    """gain[i, j] = sum_t P[t, i] (payoffs[t, j] - payoffs[t, i])"""
    received = np.einsum("ti,ti->i", P, payoffs)
    return P.T @ payoffs - received[:, None]


def swap_regret(tr: GameTranscript, game: StructuredGame, role: str = "learner") -> float:
    """sum_i max_j sum_t p_t[i] (u(j, q_t) - u(i, q_t))"""
    P, Q = tr.arrays()
    if role == "learner":
        own, payoffs = P, Q @ game.learner_utility().T
    else:
        own, payoffs = Q, P @ game.adversary_utility()
    return float(np.sum(np.max(_swap_gains(own, payoffs), axis=1)))


def swap_regret_exhaustive(tr: GameTranscript, game: StructuredGame) -> float:
    """Learner swap regret by enumerating all n^n swap functions"""
    P, Q = tr.arrays()
    utility = game.learner_utility()
    payoffs = Q @ utility.T
    base = float(np.sum(P * payoffs))
    best = -math.inf
    for phi in itertools.product(range(game.n), repeat=game.n):
        swapped = float(np.sum(P * payoffs[:, list(phi)]))
        best = max(best, swapped - base)
    return best


def correlated_eq_gap(joint: np.ndarray, game: StructuredGame) -> Tuple[float, float]:
    """Largest swap-deviation gain of each player under a joint action distribution"""
    joint = np.asarray(joint, dtype=float)
    if joint.shape != (game.n, game.n_adversary):
        raise InvalidInputError(f"joint distribution must be {game.n} x {game.n_adversary}")
    u_L, u_A = game.learner_utility(), game.adversary_utility()
    learner_gain = joint @ u_L.T
    learner_gap = float(np.sum(np.max(learner_gain - np.sum(joint * u_L, axis=1)[:, None], axis=1)))
    adversary_gain = joint.T @ u_A
    adversary_gap = float(np.sum(np.max(adversary_gain - np.sum(joint * u_A, axis=0)[:, None], axis=1)))
    return learner_gap, adversary_gap


def nfg_to_structured(U_L, U_A=None) -> StructuredGame:
    """
    Normal-form payoffs as a min(n, n')-dimensional structured game.

    Basis vectors embed the side with fewer actions; payoff rows or columns
    embed the other side, divided by their largest norm when it exceeds 1.
    The applied factors are reported as scale / adversary_scale.
    """
    U_L = np.atleast_2d(np.asarray(U_L, dtype=float))
    U_A = -U_L if U_A is None else np.atleast_2d(np.asarray(U_A, dtype=float))
    if U_L.shape != U_A.shape or not np.all(np.isfinite(U_L)) or not np.all(np.isfinite(U_A)):
        raise InvalidInputError("payoff matrices must be finite and of equal shape")
    n, n_adv = U_L.shape

    def split(U: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        if n <= n_adv:
            left, right = np.eye(n), U.T.copy()
        else:
            left, right = U.copy(), np.eye(n_adv)
        payoff_side = right if n <= n_adv else left
        largest = float(np.max(np.linalg.norm(payoff_side, axis=1)))
        factor = 1.0 / largest if largest > 1.0 else 1.0
        payoff_side *= factor
        return left, right, factor

    v, w, scale = split(U_L)
    v_prime, w_prime, adversary_scale = split(U_A)
    logger.debug(f"Normal-form {n}x{n_adv} game embedded in d={min(n, n_adv)} (scale {scale:.4g})")
    return StructuredGame(v=v, w=w, v_prime=v_prime, w_prime=w_prime, scale=scale,
                          adversary_scale=adversary_scale)


def make_game_engine(vertices: np.ndarray, T: int, record: bool = False,
                     opponent_bound: float = 1.0) -> SwapEngine:
    """Full-swap engine over conv(vertices) for the linear losses of a game"""
    body = PolytopeBody(vertices)
    config = configure_from_table("linear", body.dimension, T)
    disc = build_boundary_polytope(body, config.epsilon, allow_relaxed=True)
    return SwapEngine.from_config(config, body, lipschitz=opponent_bound,
                                  loss_range=2.0 * opponent_bound * max(body.diameter_bound, 1e-12),
                                  disc=disc, record=record)


class StructuredLearner:
    """Plays distributions over actions driven by a full-swap engine on the embeddings"""

    def __init__(self, vertices: np.ndarray, engine: SwapEngine):
        self.vertices = np.atleast_2d(vertices)
        self.engine = engine
        self.body = PolytopeBody(self.vertices)
        self._inverse: Dict[int, np.ndarray] = {}
        self.plays: List[MixedAction] = []
        self.losses: List[LossSpec] = []

    def _decompose(self, index: int, point: np.ndarray) -> np.ndarray:
        if index not in self._inverse:
            self._inverse[index] = convex_decompose(point, self.vertices)
        return self._inverse[index]

    def next_strategy(self) -> np.ndarray:
        """p_t = E_{x ~ engine play}[pi^-1(x)]"""
        action = self.engine.next_action()
        self.plays.append(action)
        p = np.zeros(self.vertices.shape[0])
        for index, prob, point in zip(action.support, action.probabilities, action.points):
            p += prob * self._decompose(int(index), point)
        return p / p.sum()

    def observe(self, y: np.ndarray):
        """Feed l_t(x) = -<x, y_t>"""
        loss = make_linear_loss(-np.asarray(y, dtype=float), domain=self.body)
        self.losses.append(loss)
        self.engine.observe(loss)


def reduce_and_play(game: StructuredGame, engine: SwapEngine,
                    role: str = "learner") -> StructuredLearner:
    """Wrap a full-swap engine over the role's embedding hull as a game learner"""
    own, _ = game.player_view(role)
    if engine.disc.dimension != own.shape[1]:
        raise InvalidInputError("engine dimension does not match the game embeddings")
    return StructuredLearner(own, engine)


class SelfPlay:
    """Two reduction learners playing a structured game against each other"""

    def __init__(self, game: StructuredGame, T: int, record: bool = False):
        self.game = game
        self.T = T
        learner_own, learner_opp = game.player_view("learner")
        adversary_own, adversary_opp = game.player_view("adversary")
        self.learner = reduce_and_play(
            game, make_game_engine(learner_own, T, record,
                                   float(np.max(np.linalg.norm(learner_opp, axis=1)))), "learner")
        self.adversary = reduce_and_play(
            game, make_game_engine(adversary_own, T, record,
                                   float(np.max(np.linalg.norm(adversary_opp, axis=1)))), "adversary")
        self.transcript = GameTranscript()

    def step(self) -> Tuple[np.ndarray, np.ndarray]:
        """One simultaneous round; returns (p_t, q_t)"""
        _, learner_opp = self.game.player_view("learner")
        _, adversary_opp = self.game.player_view("adversary")
        p = self.learner.next_strategy()
        q = self.adversary.next_strategy()
        self.transcript.append(p, q, self.game)
        self.learner.observe(q @ learner_opp)
        self.adversary.observe(p @ adversary_opp)
        return p, q

    def run(self) -> GameTranscript:
        for t in range(len(self.transcript), self.T):
            self.step()
            if (t + 1) % max(1, self.T // 10) == 0:
                logger.debug(f"Self-play round {t + 1}/{self.T}")
        return self.transcript

    def correlated_gaps(self) -> Tuple[float, float]:
        return correlated_eq_gap(self.transcript.joint_distribution(), self.game)


def random_structured_game(rng: np.random.Generator, n: int, n_adversary: int, d: int,
                           zero_sum: bool = False) -> StructuredGame:
    """Embeddings drawn uniformly from the unit ball"""
    def ball(count: int) -> np.ndarray:
        directions = rng.normal(size=(count, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return directions * rng.uniform(size=(count, 1)) ** (1.0 / d)

    v, w = ball(n), ball(n_adversary)
    if zero_sum:
        return StructuredGame(v=v, w=w)
    return StructuredGame(v=v, w=w, v_prime=ball(n), w_prime=ball(n_adversary))
