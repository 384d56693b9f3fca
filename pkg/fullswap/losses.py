"""
Loss functions with declared regularity

A LossSpec bundles value and subgradient oracles with the constants the
regret bounds are stated in (Lipschitz L, strong convexity alpha, smoothness
beta) and a class tag. Quadratic-family losses also carry their isotropic
quadratic form a*|x|^2 + <c, x> + k so evaluators can minimize sums of them
in closed form.

Also here: piecewise linearization on a 1-D grid and the statistical
near-strong-convexity checker.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidInputError
from .geometry import ConvexBody, Discretization, as_point, interval

logger = logging.getLogger(__name__)

LOSS_CLASSES = ("general", "concave", "linear", "smooth", "strongly-convex", "sc-smooth", "nsc")
CONVEX_CLASSES = ("linear", "smooth", "strongly-convex", "sc-smooth", "nsc")

NSC_SLACK = 1e-9

UNIT_INTERVAL = interval(0.0, 1.0)


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """a*|x|^2 + <c, x> + k"""

    a: float
    c: np.ndarray
    k: float

    def value(self, x: np.ndarray) -> float:
        return float(self.a * np.dot(x, x) + np.dot(self.c, x) + self.k)

    def values(self, points: np.ndarray) -> np.ndarray:
        return self.a * np.einsum("ij,ij->i", points, points) + points @ self.c + self.k


@dataclass(frozen=True, eq=False)
class LossSpec:
    """A loss with value/subgradient oracles and declared regularity constants"""

    value_fn: Callable[[np.ndarray], float] = field(repr=False)
    subgradient_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lipschitz: float
    alpha: float = 0.0
    beta: float = math.inf
    loss_class: str = "general"
    dimension: int = 1
    name: str = ""
    domain: Optional[ConvexBody] = field(default=None, repr=False, compare=False)
    quadratic: Optional[QuadraticForm] = field(default=None, repr=False)
    nsc_epsilon: Optional[float] = None
    knots: Optional[np.ndarray] = field(default=None, repr=False)
    base: Optional["LossSpec"] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.loss_class not in LOSS_CLASSES:
            raise InvalidInputError(f"unknown loss class '{self.loss_class}'")
        if self.lipschitz < 0 or self.alpha < 0 or self.beta < 0:
            raise InvalidInputError("regularity constants must be nonnegative")

    @property
    def is_convex(self) -> bool:
        return self.loss_class in CONVEX_CLASSES

    def value(self, x) -> float:
        return float(self.value_fn(as_point(x, self.dimension)))

    def subgradient(self, x) -> np.ndarray:
        return np.asarray(self.subgradient_fn(as_point(x, self.dimension)), dtype=float)

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Loss at every row of a (k, d) array"""
        points = np.atleast_2d(points)
        if self.quadratic is not None:
            return self.quadratic.values(points)
        return np.array([self.value_fn(p) for p in points])

    def __call__(self, x) -> float:
        return self.value(x)

    def describe(self) -> Dict:
        return {"name": self.name, "class": self.loss_class, "L": self.lipschitz,
                "alpha": self.alpha, "beta": self.beta, "dimension": self.dimension}


@dataclass
class NscCertificate:
    """Outcome of a sampled (alpha, epsilon)-near-strong-convexity check"""

    alpha: float
    epsilon: float
    trials: int
    violations: List[Tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def worst(self) -> Optional[Tuple[np.ndarray, np.ndarray, float]]:
        if not self.violations:
            return None
        return min(self.violations, key=lambda v: v[2])


def _radius_over(center: np.ndarray, body: Optional[ConvexBody]) -> float:
    """Upper bound on |x - center| for x in body (unit ball around 0 when body is None)"""
    if body is None:
        return 1.0 + float(np.linalg.norm(center))
    return float(np.linalg.norm(center - body.center())) + body.diameter_bound


def make_calibration_loss(b) -> LossSpec:
    """(x - b)^2 on [0, 1]"""
    if b not in (0, 1):
        raise InvalidInputError(f"calibration outcome must be 0 or 1, got {b}")
    b = float(b)
    return LossSpec(
        value_fn=lambda x: float((x[0] - b) ** 2),
        subgradient_fn=lambda x: np.array([2.0 * (x[0] - b)]),
        lipschitz=2.0, alpha=2.0, beta=2.0, loss_class="sc-smooth", dimension=1,
        name=f"calibration(b={int(b)})", domain=UNIT_INTERVAL,
        quadratic=QuadraticForm(1.0, np.array([-2.0 * b]), b * b),
    )


def make_linear_loss(c, lipschitz: Optional[float] = None,
                     domain: Optional[ConvexBody] = None) -> LossSpec:
    """<c, x>; lipschitz, when given, is a budget |c| must respect"""
    c = as_point(c)
    norm = float(np.linalg.norm(c))
    if lipschitz is not None and norm > lipschitz + 1e-12:
        raise InvalidInputError(f"|c| = {norm} exceeds the Lipschitz budget {lipschitz}")
    return LossSpec(
        value_fn=lambda x: float(np.dot(c, x)),
        subgradient_fn=lambda x: c.copy(),
        lipschitz=norm if lipschitz is None else float(lipschitz),
        alpha=0.0, beta=0.0, loss_class="linear", dimension=c.shape[0],
        name=f"linear(c={np.round(c, 6).tolist()})", domain=domain,
        quadratic=QuadraticForm(0.0, c.copy(), 0.0),
    )


def make_quadratic_loss(center, alpha: float = 2.0, domain: Optional[ConvexBody] = None,
                        lipschitz: Optional[float] = None) -> LossSpec:
    """(alpha/2) |x - center|^2, alpha-strongly-convex and alpha-smooth"""
    center = as_point(center)
    if alpha <= 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    if lipschitz is None:
        lipschitz = alpha * _radius_over(center, domain)
    half = alpha / 2.0
    return LossSpec(
        value_fn=lambda x: float(half * np.dot(x - center, x - center)),
        subgradient_fn=lambda x: alpha * (x - center),
        lipschitz=float(lipschitz), alpha=float(alpha), beta=float(alpha),
        loss_class="sc-smooth", dimension=center.shape[0],
        name=f"quadratic(center={np.round(center, 6).tolist()}, alpha={alpha})", domain=domain,
        quadratic=QuadraticForm(half, -alpha * center, half * float(np.dot(center, center))),
    )


def make_concave_loss(center, scale: float = 1.0, domain: Optional[ConvexBody] = None,
                      lipschitz: Optional[float] = None) -> LossSpec:
    """-scale |x - center|^2"""
    center = as_point(center)
    if scale < 0:
        raise InvalidInputError(f"scale must be nonnegative, got {scale}")
    if lipschitz is None:
        lipschitz = 2.0 * scale * _radius_over(center, domain)
    return LossSpec(
        value_fn=lambda x: float(-scale * np.dot(x - center, x - center)),
        subgradient_fn=lambda x: -2.0 * scale * (x - center),
        lipschitz=float(lipschitz), alpha=0.0, beta=0.0, loss_class="concave",
        dimension=center.shape[0],
        name=f"concave(center={np.round(center, 6).tolist()}, scale={scale})", domain=domain,
        quadratic=QuadraticForm(-scale, 2.0 * scale * center,
                                -scale * float(np.dot(center, center))),
    )


def make_strongly_convex_loss(center, alpha: float = 2.0, kink=None, weight: float = 0.5,
                              domain: Optional[ConvexBody] = None) -> LossSpec:
    """(alpha/2)|x - center|^2 + weight*|x - kink|: strongly convex, not smooth at the kink"""
    center = as_point(center)
    kink = center.copy() if kink is None else as_point(kink, center.shape[0])
    if alpha <= 0 or weight < 0:
        raise InvalidInputError("alpha must be positive and weight nonnegative")

    def value(x):
        return float(alpha / 2.0 * np.dot(x - center, x - center) + weight * np.linalg.norm(x - kink))

    def subgradient(x):
        offset = x - kink
        norm = np.linalg.norm(offset)
        pull = offset / norm if norm > 0 else np.zeros_like(offset)
        return alpha * (x - center) + weight * pull

    return LossSpec(
        value_fn=value, subgradient_fn=subgradient,
        lipschitz=float(alpha * _radius_over(center, domain) + weight),
        alpha=float(alpha), beta=math.inf, loss_class="strongly-convex",
        dimension=center.shape[0],
        name=f"strongly-convex(center={np.round(center, 6).tolist()}, weight={weight})",
        domain=domain,
    )


def make_smooth_loss(center, delta: float = 0.25, weight: float = 1.0,
                     domain: Optional[ConvexBody] = None) -> LossSpec:
    """Pseudo-Huber weight*delta^2*(sqrt(1 + |x-center|^2/delta^2) - 1): convex, weight-smooth"""
    center = as_point(center)
    if delta <= 0 or weight < 0:
        raise InvalidInputError("delta must be positive and weight nonnegative")

    def value(x):
        r2 = float(np.dot(x - center, x - center))
        return weight * delta ** 2 * (math.sqrt(1.0 + r2 / delta ** 2) - 1.0)

    def subgradient(x):
        r = x - center
        return weight * r / math.sqrt(1.0 + float(np.dot(r, r)) / delta ** 2)

    return LossSpec(
        value_fn=value, subgradient_fn=subgradient,
        lipschitz=float(weight * min(delta, _radius_over(center, domain))),
        alpha=0.0, beta=float(weight), loss_class="smooth", dimension=center.shape[0],
        name=f"smooth(center={np.round(center, 6).tolist()}, delta={delta})", domain=domain,
    )


def piecewise_linearize(loss: LossSpec, grid: Discretization) -> LossSpec:
    """
    Linear interpolation of loss between consecutive knots of a 1-D grid.

    Exact at knots, above the loss in between (for convex losses), and
    convex. The subgradient is the slope of the segment to the right of x;
    the last knot takes the slope of the final segment.
    """
    if grid.dimension != 1:
        raise InvalidInputError("piecewise linearization needs a 1-D grid")
    knots = np.asarray(grid.points[:, 0], dtype=float)
    if np.any(np.diff(knots) <= 0):
        raise InvalidInputError("grid knots must be strictly increasing")
    if loss.dimension != 1:
        raise InvalidInputError("piecewise linearization needs a 1-D loss")
    values = np.array([loss.value([s]) for s in knots])
    if knots.shape[0] == 1:
        slopes = np.zeros(1)
    else:
        slopes = np.diff(values) / np.diff(knots)
    last = knots.shape[0] - 1

    def segment(x: float) -> int:
        if last == 0:
            return 0
        i = int(np.searchsorted(knots, x, side="right")) - 1
        return min(max(i, 0), last - 1)

    def value(x):
        v = float(x[0])
        if last > 0 and v == knots[last]:
            return float(values[last])
        i = segment(v)
        return float(values[i] + slopes[i] * (v - knots[i]))

    def subgradient(x):
        return np.array([slopes[segment(float(x[0]))]])

    gap = float(np.max(np.diff(knots))) if last > 0 else 0.0
    return LossSpec(
        value_fn=value, subgradient_fn=subgradient,
        lipschitz=max(loss.lipschitz, float(np.max(np.abs(slopes)))),
        alpha=loss.alpha, beta=math.inf, loss_class="nsc", dimension=1,
        name=f"linearized({loss.name})", domain=grid.body if grid.body is not None else loss.domain,
        nsc_epsilon=gap, knots=knots, base=loss,
    )


def _sample_pairs(domain: ConvexBody, epsilon: float, trials: int, rng: np.random.Generator,
                  knots: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform pairs, knot pairs and pairs just beyond distance epsilon, in equal shares"""
    share = max(1, trials // 3)
    xs = [domain.sample(rng, share)]
    ys = [domain.sample(rng, share)]
    if knots is not None and knots.shape[0] > 1:
        pick = rng.integers(0, knots.shape[0], size=(share, 2))
        xs.append(knots[pick[:, 0]][:, None])
        ys.append(knots[pick[:, 1]][:, None])
    remaining = trials - sum(x.shape[0] for x in xs)
    if remaining > 0:
        base = domain.sample(rng, remaining)
        directions = rng.normal(size=base.shape)
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        lengths = epsilon * (1.0 + rng.uniform(0.0, 0.5, size=(remaining, 1)))
        shifted = np.array([domain.project(p) for p in base + lengths * directions])
        xs.append(base)
        ys.append(shifted)
    return np.vstack(xs)[:trials], np.vstack(ys)[:trials]


def check_nsc(loss: LossSpec, alpha: float, epsilon: float, trials: int = 10_000,
              rng_seed: int = 0, domain: Optional[ConvexBody] = None) -> NscCertificate:
    """
    Sampled check of l(y) - l(x) - <g(x), y - x> >= (alpha/2) * max(|y - x| - eps, 0)^2.

    Violations are reported on the certificate, never raised.
    """
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    domain = domain or loss.domain
    if domain is None:
        raise InvalidInputError(f"no sampling domain for loss '{loss.name}'")
    rng = np.random.default_rng(rng_seed)
    xs, ys = _sample_pairs(domain, epsilon, trials, rng, loss.knots)
    certificate = NscCertificate(alpha=alpha, epsilon=epsilon, trials=xs.shape[0])
    for x, y in zip(xs, ys):
        lhs = loss.value(y) - loss.value(x) - float(np.dot(loss.subgradient(x), y - x))
        rhs = alpha / 2.0 * max(float(np.linalg.norm(y - x)) - epsilon, 0.0) ** 2
        if lhs < rhs - NSC_SLACK:
            certificate.violations.append((x.copy(), y.copy(), lhs - rhs))
    if certificate.violations:
        logger.debug(f"NSC check of {loss.name}: {len(certificate.violations)}/{certificate.trials} "
                     f"violations")
    return certificate


def check_regularity(loss: LossSpec, trials: int = 1000, rng_seed: int = 0,
                     domain: Optional[ConvexBody] = None, slack: float = 1e-9) -> List[str]:
    """Sampled check of the declared L, alpha and beta; returns human-readable failures"""
    domain = domain or loss.domain
    if domain is None:
        raise InvalidInputError(f"no sampling domain for loss '{loss.name}'")
    rng = np.random.default_rng(rng_seed)
    xs, ys = domain.sample(rng, trials), domain.sample(rng, trials)
    failures = []
    for x, y in zip(xs, ys):
        g = loss.subgradient(x)
        if np.linalg.norm(g) > loss.lipschitz + slack:
            failures.append(f"|subgradient({x})| = {np.linalg.norm(g):.6g} > L = {loss.lipschitz}")
        gap = loss.value(y) - loss.value(x) - float(np.dot(g, y - x))
        dist2 = float(np.dot(y - x, y - x))
        if loss.alpha > 0 and gap < loss.alpha / 2.0 * dist2 - slack:
            failures.append(f"strong convexity fails at ({x}, {y}): gap {gap:.6g}")
        if math.isfinite(loss.beta) and gap > loss.beta / 2.0 * dist2 + slack:
            failures.append(f"smoothness fails at ({x}, {y}): gap {gap:.6g}")
    return failures


LOSS_FACTORIES: Dict[str, Callable[..., LossSpec]] = {
    "calibration": make_calibration_loss,
    "linear": make_linear_loss,
    "quadratic": make_quadratic_loss,
    "concave": make_concave_loss,
    "strongly-convex": make_strongly_convex_loss,
    "smooth": make_smooth_loss,
}

_PARAM_PATTERN = re.compile(r"([A-Za-z_]\w*)\s*=\s*(\[[^\]]*\]|[^,]+)")


def parse_loss_spec(text: str) -> Tuple[str, Dict]:
    """
    Split a config loss name into (tag, params).

    'calibration', 'linear:c=[1,0]', 'quadratic:center=[0.3],alpha=2'
    """
    tag, _, rest = text.strip().partition(":")
    tag = tag.strip()
    if tag not in LOSS_FACTORIES:
        raise InvalidInputError(f"unknown loss family '{tag}' (known: {sorted(LOSS_FACTORIES)})")
    params: Dict = {}
    for key, raw in _PARAM_PATTERN.findall(rest):
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw.strip()
    return tag, params


def make_loss(tag: str, **params) -> LossSpec:
    """Build a named loss family member"""
    if tag not in LOSS_FACTORIES:
        raise InvalidInputError(f"unknown loss family '{tag}'")
    try:
        return LOSS_FACTORIES[tag](**params)
    except TypeError as e:
        raise InvalidInputError(f"bad parameters for loss '{tag}': {e}") from e


def loss_from_spec(text: str, **overrides) -> LossSpec:
    tag, params = parse_loss_spec(text)
    params.update(overrides)
    return make_loss(tag, **params)


def with_domain(loss: LossSpec, domain: ConvexBody) -> LossSpec:
    return replace(loss, domain=domain)
