"""
Convex bodies, projections and discretizations

Bodies are given by membership and Euclidean projection oracles. The three
discretization kinds consumed by the swap engines are built here:

    net                 every body point has a discretization point within epsilon
    triangulation       hull is epsilon^2-close to the body and split into simplices
                        of diameter <= 2 epsilon
    boundary-polytope   vertices inside the body whose hull is epsilon^2-close to it

Constructions are explicit (uniform grids, Kuhn subdivision, inscribed regular
polytopes) for intervals, boxes, balls and vertex polytopes in dimension <= 3.
"""

import itertools
import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, cKDTree
from scipy.spatial.distance import pdist

from .errors import (
    GeometryInconsistencyError,
    InvalidInputError,
    UnsupportedBodyError,
    UnsupportedDimensionError,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-9
BOUNDARY_EPSILON_MAX = 0.01
MAX_SIMPLICIAL_DIMENSION = 3

KINDS = ("net", "triangulation", "boundary-polytope")


@dataclass(frozen=True, eq=False)
class Tolerances:
    """Absolute tolerances shared by geometry checks and evaluators"""

    membership: float = DEFAULT_TOLERANCE
    reconstruction: float = DEFAULT_TOLERANCE
    stationarity: float = DEFAULT_TOLERANCE
    distribution: float = DEFAULT_TOLERANCE

    @classmethod
    def from_dict(cls, values: Optional[Dict]) -> "Tolerances":
        values = values or {}
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown tolerance keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items()})


def as_point(x, dimension: Optional[int] = None) -> np.ndarray:
    """Coerce a scalar or sequence into a finite 1-D float vector"""
    point = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if not np.all(np.isfinite(point)):
        raise InvalidInputError(f"non-finite point: {point}")
    if dimension is not None and point.shape[0] != dimension:
        raise InvalidInputError(f"expected a {dimension}-vector, got shape {point.shape}")
    return point


def barycentric_weights(x: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """
    Express x as a convex combination of the given vertices.

    Solves the (d+1) x m system [vertices^T; 1] v = [x; 1]. Degenerate or
    under-determined systems fall back to least squares; the result is clipped
    to be nonnegative and renormalized.
    """
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    m = vertices.shape[0]
    if m == 1:
        return np.ones(1)
    system = np.vstack([vertices.T, np.ones((1, m))])
    rhs = np.append(np.asarray(x, dtype=float), 1.0)
    if system.shape[0] == m:
        try:
            weights = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            weights = np.linalg.lstsq(system, rhs, rcond=None)[0]
    else:
        weights = np.linalg.lstsq(system, rhs, rcond=None)[0]
    weights = np.clip(weights, 0.0, None)
    total = weights.sum()
    if total <= 0.0:
        raise GeometryInconsistencyError(f"no convex combination of {m} vertices reaches {x}")
    return weights / total


def project_onto_simplex(x: np.ndarray, vertices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest point of conv(vertices) to x by face enumeration; returns (weights, point)"""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    m = vertices.shape[0]
    best_dist, best_weights, best_point = np.inf, None, None
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            face = vertices[list(subset)]
            base = face[0]
            if size == 1:
                mu = np.zeros(0)
            else:
                directions = (face[1:] - base).T
                mu = np.linalg.lstsq(directions, x - base, rcond=None)[0]
            lam = np.concatenate([[1.0 - mu.sum()], mu])
            if np.any(lam < -1e-12):
                continue
            lam = np.clip(lam, 0.0, None)
            lam = lam / lam.sum()
            point = lam @ face
            dist = float(np.linalg.norm(point - x))
            if dist < best_dist - 1e-15:
                weights = np.zeros(m)
                weights[list(subset)] = lam
                best_dist, best_weights, best_point = dist, weights, point
    return best_weights, best_point


@dataclass(frozen=True, eq=False)
class AffineFrame:
    """Orthonormal coordinates on the affine hull of a point set"""

    origin: np.ndarray
    basis: np.ndarray

    @classmethod
    def of(cls, points: np.ndarray, tol: float = DEFAULT_TOLERANCE) -> "AffineFrame":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        origin = points.mean(axis=0)
        _, singular, vt = np.linalg.svd(points - origin, full_matrices=False)
        scale = max(1.0, float(singular[0])) if singular.size else 1.0
        rank = int(np.sum(singular > tol * scale * 10))
        return cls(origin=origin, basis=vt[:rank].T.copy())

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def to_local(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.basis

    def to_global(self, y: np.ndarray) -> np.ndarray:
        return self.origin + self.basis @ np.asarray(y, dtype=float)


class HullProjector:
    """Exact Euclidean projection onto the hull of a full-dimensional point set (dim >= 2)"""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self.hull = ConvexHull(self.points)
        self.normals = self.hull.equations[:, :-1]
        self.offsets = self.hull.equations[:, -1]

    def signed_distances(self, y: np.ndarray) -> np.ndarray:
        return self.normals @ y + self.offsets

    def contains(self, y: np.ndarray, tol: float = DEFAULT_TOLERANCE) -> bool:
        return bool(np.all(self.signed_distances(y) <= tol))

    def project(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (vertex indices, weights, point) of the nearest hull point to y outside it"""
        distances = self.signed_distances(y)
        candidates = np.flatnonzero(distances > 0)
        if candidates.size == 0:
            candidates = np.arange(len(self.hull.simplices))
        best = (np.inf, None, None, None)
        for facet_index in candidates:
            facet = self.hull.simplices[facet_index]
            weights, point = project_onto_simplex(y, self.points[facet])
            dist = float(np.linalg.norm(point - y))
            if dist < best[0]:
                best = (dist, facet, weights, point)
        _, facet, weights, point = best
        return np.asarray(facet), weights, point

    def max_defect_from_ball(self, center: np.ndarray, radius: float) -> float:
        """Largest distance from a ball point to this hull (center assumed inside)"""
        return float(radius - np.min(-(self.normals @ center + self.offsets)))


# ---------------------------------------------------------------------------
# Convex bodies
# ---------------------------------------------------------------------------

class ConvexBody(ABC):
    """An action set K given by membership and projection oracles"""

    family = "abstract"

    def __init__(self, dimension: int, diameter_bound: float):
        if dimension < 1:
            raise InvalidInputError(f"dimension must be positive, got {dimension}")
        self.dimension = int(dimension)
        self.diameter_bound = float(diameter_bound)

    @abstractmethod
    def membership(self, x, tol: float = DEFAULT_TOLERANCE) -> bool:
        """True iff x lies in the body (up to tol)"""

    @abstractmethod
    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the body"""

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n points drawn from the body"""

    @abstractmethod
    def linear_minimizer(self, c) -> np.ndarray:
        """A body point minimizing <c, x>"""

    @abstractmethod
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing the body"""

    @abstractmethod
    def center(self) -> np.ndarray:
        """A fixed interior (or relative-interior) point"""

    def describe(self) -> Dict:
        return {"family": self.family, "dimension": self.dimension,
                "diameter_bound": self.diameter_bound}


class BoxBody(ConvexBody):
    """Axis-aligned box [lo, hi]; an interval when d = 1"""

    family = "box"

    def __init__(self, lo, hi):
        lo = as_point(lo)
        hi = as_point(hi, lo.shape[0])
        if np.any(hi <= lo):
            raise InvalidInputError(f"inverted or empty box: lo={lo}, hi={hi}")
        super().__init__(lo.shape[0], float(np.linalg.norm(hi - lo)))
        self.lo = lo
        self.hi = hi

    @property
    def is_interval(self) -> bool:
        return self.dimension == 1

    def membership(self, x, tol: float = DEFAULT_TOLERANCE) -> bool:
        x = as_point(x, self.dimension)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def project(self, x) -> np.ndarray:
        return np.clip(as_point(x, self.dimension), self.lo, self.hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dimension))

    def linear_minimizer(self, c) -> np.ndarray:
        c = as_point(c, self.dimension)
        return np.where(c < 0, self.hi, self.lo)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lo.copy(), self.hi.copy()

    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    def describe(self) -> Dict:
        info = super().describe()
        info.update({"lo": self.lo.tolist(), "hi": self.hi.tolist()})
        return info


class IntervalBody(BoxBody):
    """The interval [lo, hi]"""

    family = "interval"

    def __init__(self, lo: float, hi: float):
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise InvalidInputError(f"interval bounds must be finite with lo < hi, got ({lo}, {hi})")
        super().__init__([lo], [hi])


def interval(lo: float, hi: float) -> IntervalBody:
    return IntervalBody(float(lo), float(hi))


class BallBody(ConvexBody):
    """Euclidean ball of given center and radius"""

    family = "ball"

    def __init__(self, center, radius: float = 1.0):
        center = as_point(center)
        if not math.isfinite(radius) or radius <= 0:
            raise InvalidInputError(f"radius must be positive, got {radius}")
        super().__init__(center.shape[0], 2.0 * radius)
        self._center = center
        self.radius = float(radius)

    def membership(self, x, tol: float = DEFAULT_TOLERANCE) -> bool:
        x = as_point(x, self.dimension)
        return bool(np.linalg.norm(x - self._center) <= self.radius + tol)

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dimension)
        offset = x - self._center
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return x
        return self._center + self.radius * offset / norm

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        directions = rng.normal(size=(n, self.dimension))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dimension)
        return self._center + radii * directions

    def linear_minimizer(self, c) -> np.ndarray:
        c = as_point(c, self.dimension)
        norm = np.linalg.norm(c)
        if norm == 0:
            return self._center.copy()
        return self._center - self.radius * c / norm

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._center - self.radius, self._center + self.radius

    def center(self) -> np.ndarray:
        return self._center.copy()

    def describe(self) -> Dict:
        info = super().describe()
        info.update({"center": self._center.tolist(), "radius": self.radius})
        return info


def unit_ball(dimension: int) -> BallBody:
    return BallBody(np.zeros(dimension), 1.0)


class PolytopeBody(ConvexBody):
    """
    Convex hull of an explicit vertex list.

    The vertices may be affinely degenerate (e.g. the standard basis of R^n);
    all geometry is done in orthonormal coordinates on their affine hull.
    """

    family = "polytope"

    def __init__(self, vertices, tol: float = DEFAULT_TOLERANCE):
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        if vertices.shape[0] == 0 or not np.all(np.isfinite(vertices)):
            raise InvalidInputError("polytope needs at least one finite vertex")
        diameter = float(pdist(vertices).max()) if vertices.shape[0] > 1 else 0.0
        super().__init__(vertices.shape[1], diameter)
        self.vertices = vertices
        self.tol = tol
        self.frame = AffineFrame.of(vertices, tol)
        self.local_vertices = self.frame.to_local(vertices)
        self._hull: Optional[HullProjector] = None
        if self.frame.rank >= 2:
            self._hull = HullProjector(self.local_vertices)
            self.extreme_indices = np.sort(self._hull.hull.vertices)
        elif self.frame.rank == 1:
            coords = self.local_vertices[:, 0]
            self.extreme_indices = np.unique([int(np.argmin(coords)), int(np.argmax(coords))])
        else:
            self.extreme_indices = np.array([0])

    def _local_project(self, y: np.ndarray) -> np.ndarray:
        if self.frame.rank == 0:
            return np.zeros(0)
        if self.frame.rank == 1:
            coords = self.local_vertices[:, 0]
            return np.clip(y, coords.min(), coords.max())
        if self._hull.contains(y, 0.0):
            return y
        return self._hull.project(y)[2]

    def membership(self, x, tol: float = DEFAULT_TOLERANCE) -> bool:
        x = as_point(x, self.dimension)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dimension)
        return self.frame.to_global(self._local_project(self.frame.to_local(x)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        weights = rng.dirichlet(np.ones(self.vertices.shape[0]), size=n)
        return weights @ self.vertices

    def linear_minimizer(self, c) -> np.ndarray:
        c = as_point(c, self.dimension)
        return self.vertices[int(np.argmin(self.vertices @ c))].copy()

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def center(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def describe(self) -> Dict:
        info = super().describe()
        info.update({"vertices": self.vertices.tolist(), "affine_rank": self.frame.rank})
        return info


# ---------------------------------------------------------------------------
# Simplex location
# ---------------------------------------------------------------------------

class SimplexLocator(ABC):
    """Finds the simplex of a discretization containing a (projected) point"""

    @abstractmethod
    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Return (vertex indices, barycentric weights)"""


class IntervalLocator(SimplexLocator):
    """Sorted 1-D knots; segments are consecutive pairs, right-continuous at knots"""

    def __init__(self, knots: np.ndarray):
        self.knots = np.asarray(knots, dtype=float)

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        knots = self.knots
        if knots.shape[0] == 1:
            return np.array([0]), np.ones(1)
        value = min(max(float(x[0]), knots[0]), knots[-1])
        i = int(np.searchsorted(knots, value, side="right")) - 1
        i = min(max(i, 0), knots.shape[0] - 2)
        upper = (value - knots[i]) / (knots[i + 1] - knots[i])
        return np.array([i, i + 1]), np.array([1.0 - upper, upper])


class KuhnLocator(SimplexLocator):
    """Cell hashing on a regular grid; the Kuhn simplex follows the sorted fractional coordinates"""

    def __init__(self, lo: np.ndarray, spacing: np.ndarray, counts: np.ndarray):
        self.lo = lo
        self.spacing = spacing
        self.counts = counts
        self.dims = tuple(int(n) + 1 for n in counts)

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        scaled = (x - self.lo) / self.spacing
        cell = np.clip(np.floor(scaled), 0, self.counts - 1).astype(int)
        frac = np.clip(scaled - cell, 0.0, 1.0)
        order = np.argsort(-frac, kind="stable")
        d = x.shape[0]
        corners = [cell.copy()]
        current = cell.copy()
        for axis in order:
            current = current.copy()
            current[axis] += 1
            corners.append(current)
        ordered = frac[order]
        weights = np.empty(d + 1)
        weights[0] = 1.0 - ordered[0]
        weights[1:d] = ordered[:-1] - ordered[1:]
        weights[d] = ordered[-1]
        indices = np.ravel_multi_index(np.array(corners).T, self.dims)
        return np.asarray(indices), weights


class DelaunayLocator(SimplexLocator):
    """scipy Delaunay point location; points outside the hull go to the nearest hull facet"""

    def __init__(self, points: np.ndarray, triangulation: Delaunay):
        self.points = points
        self.triangulation = triangulation
        self.hull = HullProjector(points)

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        simplex = int(self.triangulation.find_simplex(x))
        if simplex >= 0:
            indices = self.triangulation.simplices[simplex]
            return np.asarray(indices), barycentric_weights(x, self.points[indices])
        facet, weights, _ = self.hull.project(x)
        return facet, weights


class ScanLocator(SimplexLocator):
    """Linear scan over an explicit simplex list, in affine-hull coordinates"""

    def __init__(self, points: np.ndarray, simplices: np.ndarray, tol: float = DEFAULT_TOLERANCE):
        self.points = points
        self.simplices = np.asarray(simplices, dtype=int)
        self.tol = tol
        self.frame = AffineFrame.of(points, tol)
        self.local = self.frame.to_local(points)
        self.hull = HullProjector(self.local) if self.frame.rank >= 2 else None

    def _project_local(self, y: np.ndarray) -> np.ndarray:
        if self.frame.rank == 0:
            return y
        if self.frame.rank == 1:
            return np.clip(y, self.local[:, 0].min(), self.local[:, 0].max())
        if self.hull.contains(y, 0.0):
            return y
        return self.hull.project(y)[2]

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        y = self._project_local(self.frame.to_local(x))
        for simplex in self.simplices:
            vertices = self.local[simplex]
            weights = barycentric_weights(y, vertices)
            if np.linalg.norm(weights @ vertices - y) <= max(self.tol, 1e-9):
                return simplex.copy(), weights
        raise GeometryInconsistencyError(f"no simplex contains {x}")


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Discretization:
    """Finite point set K^eps with optional simplex structure"""

    points: np.ndarray
    epsilon: float
    kind: str
    simplices: Optional[np.ndarray] = None
    budget: Optional[int] = None
    relaxed: bool = False
    body: Optional[ConvexBody] = field(default=None, repr=False, compare=False)
    locator: Optional[SimplexLocator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown discretization kind '{self.kind}'")
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise InvalidInputError("discretization needs a non-empty (k, d) point array")
        if self.budget is not None and self.points.shape[0] > self.budget:
            raise GeometryInconsistencyError(
                f"{self.points.shape[0]} points exceed the declared budget {self.budget}")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def knots(self) -> np.ndarray:
        """Sorted coordinates of a 1-D discretization"""
        if self.dimension != 1:
            raise UnsupportedDimensionError("knots are only defined for 1-D discretizations")
        return self.points[:, 0]

    def nearest_index(self, x) -> int:
        """Index of the nearest point; ties go to the lowest index"""
        x = as_point(x, self.dimension)
        distances = np.linalg.norm(self.points - x, axis=1)
        return int(np.flatnonzero(distances <= distances.min() + 1e-12)[0])

    def project_to_hull(self, x) -> np.ndarray:
        indices, weights = locate_simplex(x, self)
        return weights @ self.points[indices]

    def max_gap(self) -> float:
        """Largest distance between consecutive knots of a 1-D grid"""
        knots = self.knots
        return float(np.max(np.diff(knots))) if knots.shape[0] > 1 else 0.0

    def to_json(self) -> Dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "points": self.points.tolist(),
            "simplices": None if self.simplices is None else self.simplices.tolist(),
        }

    @classmethod
    def from_json(cls, document: Dict) -> "Discretization":
        points = np.atleast_2d(np.asarray(document["points"], dtype=float))
        simplices = document.get("simplices")
        locator: Optional[SimplexLocator] = None
        if simplices is not None:
            simplices = np.asarray(simplices, dtype=int)
            if points.shape[1] == 1:
                knots = points[:, 0]
                if np.any(np.diff(knots) <= 0):
                    raise InvalidInputError("1-D triangulation knots must be strictly increasing")
                locator = IntervalLocator(knots)
            else:
                locator = ScanLocator(points, simplices)
        return cls(points=points, epsilon=float(document["epsilon"]), kind=document["kind"],
                   simplices=simplices, locator=locator)

    def save(self, path) -> str:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)
        logger.info(f"Discretization ({self.kind}, {self.size} points) saved to: {path}")
        return str(path)

    @classmethod
    def load(cls, path) -> "Discretization":
        with open(path, "r") as f:
            return cls.from_json(json.load(f))


def _check_epsilon(epsilon: float) -> float:
    if not math.isfinite(epsilon) or epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive and finite, got {epsilon}")
    return float(epsilon)


def _cell_counts(lo: np.ndarray, hi: np.ndarray, step: float) -> np.ndarray:
    return np.maximum(1, np.ceil((hi - lo) / step - 1e-9)).astype(int)


def _grid_points(lo: np.ndarray, hi: np.ndarray, counts: np.ndarray) -> np.ndarray:
    axes = [np.linspace(lo[i], hi[i], counts[i] + 1) for i in range(lo.shape[0])]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _drop_near_duplicates(points: np.ndarray, radius: float) -> np.ndarray:
    """Greedy removal of points within radius of an earlier point; order preserved"""
    pairs = cKDTree(points).query_pairs(r=radius, output_type="ndarray")
    if pairs.size == 0:
        return points
    drop = set(int(j) for i, j in pairs if i < j)
    keep = [i for i in range(points.shape[0]) if i not in drop]
    return points[keep]


def build_interval_grid(lo: float, hi: float, epsilon: float) -> Discretization:
    """Uniform knots lo, lo+eps', ..., hi with eps' = (hi-lo)/ceil((hi-lo)/eps)"""
    body = interval(lo, hi)
    epsilon = _check_epsilon(epsilon)
    if epsilon > hi - lo + 1e-12:
        raise InvalidInputError(f"epsilon {epsilon} exceeds the interval length {hi - lo}")
    cells = int(_cell_counts(body.lo, body.hi, epsilon)[0])
    knots = np.linspace(lo, hi, cells + 1)
    simplices = np.stack([np.arange(cells), np.arange(1, cells + 1)], axis=1)
    logger.debug(f"Interval grid on [{lo}, {hi}] with {cells + 1} knots (eps={epsilon})")
    return Discretization(points=knots[:, None], epsilon=epsilon, kind="triangulation",
                          simplices=simplices, budget=cells + 1, body=body,
                          locator=IntervalLocator(knots))


def grid_from_knots(knots: Sequence[float], epsilon: Optional[float] = None) -> Discretization:
    """1-D triangulation on arbitrary strictly increasing knots"""
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.shape[0] < 1 or not np.all(np.isfinite(knots)):
        raise InvalidInputError("knots must be a non-empty finite 1-D sequence")
    if np.any(np.diff(knots) <= 0):
        raise InvalidInputError("knots must be strictly increasing")
    gap = float(np.max(np.diff(knots))) if knots.shape[0] > 1 else 0.0
    k = knots.shape[0]
    simplices = np.stack([np.arange(k - 1), np.arange(1, k)], axis=1) if k > 1 else np.array([[0, 0]])
    body = interval(knots[0], knots[-1]) if k > 1 else None
    return Discretization(points=knots[:, None], epsilon=epsilon if epsilon is not None else gap,
                          kind="triangulation", simplices=simplices, budget=k, body=body,
                          locator=IntervalLocator(knots))


def build_box_net(box: ConvexBody, epsilon: float) -> Discretization:
    """Regular grid of spacing <= eps/sqrt(d) over an axis-aligned box"""
    if not isinstance(box, BoxBody):
        raise UnsupportedBodyError(f"box net needs an axis-aligned box, got {box.family}")
    epsilon = _check_epsilon(epsilon)
    counts = _cell_counts(box.lo, box.hi, epsilon / math.sqrt(box.dimension))
    points = _grid_points(box.lo, box.hi, counts)
    logger.info(f"Box net: d={box.dimension}, eps={epsilon}, {points.shape[0]} points")
    return Discretization(points=points, epsilon=epsilon, kind="net",
                          budget=int(np.prod(counts + 1)), body=box)


def build_net(body: ConvexBody, epsilon: float) -> Discretization:
    """
    epsilon-net of any supported body.

    Grid vertices within one cell diameter of the body are projected onto it.
    Projection is nonexpansive, so every body point stays within one cell
    diameter (= eps) of the net.
    """
    if isinstance(body, BoxBody):
        return build_box_net(body, epsilon)
    epsilon = _check_epsilon(epsilon)
    lo, hi = body.bounding_box()
    step = epsilon / math.sqrt(body.dimension)
    span = np.maximum(hi - lo, step)
    counts = _cell_counts(lo, lo + span, step)
    grid = _grid_points(lo, lo + span, counts)
    projected = np.array([body.project(v) for v in grid])
    near = np.linalg.norm(projected - grid, axis=1) <= epsilon
    points = _drop_near_duplicates(projected[near], step * 1e-3)
    logger.info(f"Net of {body.family}: d={body.dimension}, eps={epsilon}, {points.shape[0]} points")
    return Discretization(points=points, epsilon=epsilon, kind="net",
                          budget=int(np.prod(counts + 1)), body=body)


def _kuhn_simplices(counts: np.ndarray) -> np.ndarray:
    d = counts.shape[0]
    dims = tuple(int(n) + 1 for n in counts)
    simplices: List[List[int]] = []
    for cell in itertools.product(*[range(int(n)) for n in counts]):
        for order in itertools.permutations(range(d)):
            corner = np.array(cell)
            corners = [corner.copy()]
            for axis in order:
                corner = corner.copy()
                corner[axis] += 1
                corners.append(corner)
            simplices.append(list(np.ravel_multi_index(np.array(corners).T, dims)))
    return np.asarray(simplices, dtype=int)


def build_kuhn_triangulation(body: ConvexBody, epsilon: float) -> Discretization:
    """
    epsilon-triangulation by Kuhn subdivision of a grid with cell side <= eps/sqrt(d).

    Boxes are covered exactly. For balls, grid vertices of cells meeting the
    ball are kept (outside ones projected onto the sphere), inscribed boundary
    vertices are added so the hull defect stays below eps^2, and the point set
    is triangulated by Delaunay since projected Kuhn cells can overlap.
    """
    epsilon = _check_epsilon(epsilon)
    if body.dimension > MAX_SIMPLICIAL_DIMENSION:
        raise UnsupportedBodyError(f"triangulations are limited to d <= {MAX_SIMPLICIAL_DIMENSION}")
    if isinstance(body, BoxBody):
        if body.is_interval:
            return build_interval_grid(float(body.lo[0]), float(body.hi[0]),
                                       min(epsilon, float(body.hi[0] - body.lo[0])))
        counts = _cell_counts(body.lo, body.hi, epsilon / math.sqrt(body.dimension))
        points = _grid_points(body.lo, body.hi, counts)
        spacing = (body.hi - body.lo) / counts
        simplices = _kuhn_simplices(counts)
        logger.info(f"Kuhn triangulation of box: d={body.dimension}, eps={epsilon}, "
                    f"{points.shape[0]} points, {simplices.shape[0]} simplices")
        return Discretization(points=points, epsilon=epsilon, kind="triangulation",
                              simplices=simplices, budget=int(np.prod(counts + 1)), body=body,
                              locator=KuhnLocator(body.lo.copy(), spacing, counts))
    if isinstance(body, BallBody):
        if body.dimension == 1:
            c, r = float(body.center()[0]), body.radius
            return build_interval_grid(c - r, c + r, min(epsilon, 2 * r))
        return _ball_triangulation(body, epsilon)
    raise UnsupportedBodyError(f"no Kuhn triangulation for body family '{body.family}'")


def _ball_triangulation(ball: BallBody, epsilon: float) -> Discretization:
    d = ball.dimension
    step = epsilon / math.sqrt(d)
    lo, hi = ball.bounding_box()
    counts = _cell_counts(lo, hi, step)
    spacing = (hi - lo) / counts
    grid = _grid_points(lo, hi, counts)
    dims = tuple(int(n) + 1 for n in counts)
    center = ball.center()

    keep = np.zeros(grid.shape[0], dtype=bool)
    offsets = np.array(list(itertools.product((0, 1), repeat=d)))
    for cell in itertools.product(*[range(int(n)) for n in counts]):
        cell_lo = lo + spacing * np.array(cell)
        nearest = np.clip(center, cell_lo, cell_lo + spacing)
        if np.linalg.norm(nearest - center) <= ball.radius:
            corners = np.ravel_multi_index((np.array(cell) + offsets).T, dims)
            keep[corners] = True
    projected = np.array([ball.project(v) for v in grid[keep]])
    boundary = build_boundary_polytope(ball, epsilon / math.sqrt(2.0), allow_relaxed=True)
    candidates = np.vstack([projected, boundary.points])
    points = _drop_near_duplicates(candidates, step * 1e-3)
    triangulation = Delaunay(points)
    logger.info(f"Ball triangulation: d={d}, eps={epsilon}, {points.shape[0]} points, "
                f"{triangulation.simplices.shape[0]} simplices")
    budget = int(np.prod(counts + 1)) + boundary.budget
    return Discretization(points=points, epsilon=epsilon, kind="triangulation",
                          simplices=np.asarray(triangulation.simplices, dtype=int), budget=budget,
                          body=ball, locator=DelaunayLocator(points, triangulation))


def _fibonacci_sphere(n: int) -> np.ndarray:
    index = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * index / n)
    azimuth = math.pi * (1.0 + math.sqrt(5.0)) * index
    return np.stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar),
                     np.cos(polar)], axis=1)


def _cone_simplices(local_points: np.ndarray, hull: ConvexHull) -> np.ndarray:
    """Triangulate a convex polytope by coning vertex 0 over the facets that miss it"""
    apex = int(hull.vertices.min())
    cones = [[apex] + list(facet) for facet in hull.simplices if apex not in facet]
    return np.asarray(cones, dtype=int)


def build_boundary_polytope(body: ConvexBody, epsilon: float,
                            allow_relaxed: bool = True) -> Discretization:
    """
    Inscribed polytope whose hull is within eps^2 of the body.

    Balls: regular m-gon (d=2, smallest m with r(1-cos(pi/m)) <= eps^2) or a
    Fibonacci point set refined until the exact hull defect is <= eps^2 (d=3).
    Intervals use their endpoints; vertex polytopes use their extreme vertices.
    """
    epsilon = _check_epsilon(epsilon)
    relaxed = epsilon > BOUNDARY_EPSILON_MAX
    if relaxed:
        if not allow_relaxed:
            raise InvalidInputError(f"epsilon {epsilon} outside (0, {BOUNDARY_EPSILON_MAX}]")
        logger.debug(f"Boundary polytope with relaxed epsilon {epsilon} > {BOUNDARY_EPSILON_MAX}")

    if isinstance(body, BoxBody) and body.is_interval:
        points = np.array([[body.lo[0]], [body.hi[0]]])
        return Discretization(points=points, epsilon=epsilon, kind="boundary-polytope",
                              simplices=np.array([[0, 1]]), budget=2, relaxed=relaxed,
                              body=body, locator=IntervalLocator(points[:, 0]))

    if isinstance(body, BoxBody):
        corners = PolytopeBody(_grid_points(body.lo, body.hi, np.ones(body.dimension, dtype=int)))
        polytope = build_boundary_polytope(corners, epsilon, allow_relaxed)
        return Discretization(points=polytope.points, epsilon=epsilon, kind="boundary-polytope",
                              simplices=polytope.simplices, budget=polytope.budget,
                              relaxed=relaxed, body=body, locator=polytope.locator)

    if isinstance(body, PolytopeBody):
        points = body.vertices[body.extreme_indices]
        if body.frame.rank >= 2:
            local = body.frame.to_local(points)
            simplices = _cone_simplices(local, ConvexHull(local))
        elif points.shape[0] == 2:
            simplices = np.array([[0, 1]])
        else:
            simplices = np.array([[0]])
        return Discretization(points=points, epsilon=epsilon, kind="boundary-polytope",
                              simplices=simplices, budget=body.vertices.shape[0], relaxed=relaxed,
                              body=body, locator=ScanLocator(points, simplices))

    if not isinstance(body, BallBody) or body.dimension > MAX_SIMPLICIAL_DIMENSION:
        raise UnsupportedBodyError(f"no boundary polytope for body family '{body.family}' "
                                   f"in dimension {body.dimension}")

    center, radius = body.center(), body.radius
    if body.dimension == 1:
        points = np.array([center - radius, center + radius])
        return Discretization(points=points, epsilon=epsilon, kind="boundary-polytope",
                              simplices=np.array([[0, 1]]), budget=2, relaxed=relaxed,
                              body=body, locator=IntervalLocator(points[:, 0]))

    target = epsilon ** 2
    if body.dimension == 2:
        half_angle = math.acos(max(-1.0, min(1.0, 1.0 - target / radius)))
        m = max(3, math.ceil(math.pi / half_angle - 1e-12))
        angles = 2.0 * math.pi * np.arange(m) / m
        points = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        budget = max(m, math.ceil(math.pi * math.sqrt(radius) / (math.sqrt(2.0) * epsilon)))
    else:
        n = max(12, math.ceil(2.0 * radius / target))
        while True:
            points = center + radius * _fibonacci_sphere(n)
            defect = HullProjector(points).max_defect_from_ball(center, radius)
            if defect <= target:
                break
            n = math.ceil(1.25 * n)
        budget = n
    hull = ConvexHull(points)
    simplices = _cone_simplices(points, hull)
    logger.info(f"Boundary polytope of ball: d={body.dimension}, eps={epsilon}, "
                f"{points.shape[0]} vertices")
    return Discretization(points=points, epsilon=epsilon, kind="boundary-polytope",
                          simplices=simplices, budget=budget, relaxed=relaxed, body=body,
                          locator=ScanLocator(points, simplices))


def locate_simplex(x, disc: Discretization,
                   tol: float = DEFAULT_TOLERANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Simplex of the discretization containing the hull projection of x.

    Returns (vertex indices, barycentric weights); at most d+1 vertices, weights
    nonnegative and summing to one.
    """
    if disc.simplices is None or disc.locator is None:
        raise InvalidInputError(f"discretization of kind '{disc.kind}' has no simplices")
    x = as_point(x, disc.dimension)
    y = disc.body.project(x) if disc.body is not None else x
    indices, weights = disc.locator.locate(y)
    reconstruction = weights @ disc.points[indices]
    allowed = disc.epsilon ** 2 + tol if disc.body is not None else tol
    if np.linalg.norm(reconstruction - y) > allowed:
        raise GeometryInconsistencyError(
            f"point {x} is {np.linalg.norm(reconstruction - y):.3g} from the hull "
            f"(allowed {allowed:.3g})")
    return np.asarray(indices, dtype=int), weights


def covering_radius(disc: Discretization, samples: np.ndarray) -> float:
    """Largest sample-to-nearest-point distance"""
    distances, _ = cKDTree(disc.points).query(samples)
    return float(np.max(distances))


def hull_defect(disc: Discretization, samples: np.ndarray) -> float:
    """Largest distance from a sample to its reconstructed hull projection"""
    worst = 0.0
    for x in samples:
        indices, weights = locate_simplex(x, disc)
        worst = max(worst, float(np.linalg.norm(weights @ disc.points[indices] - x)))
    return worst


def simplex_diameter(disc: Discretization) -> float:
    """Largest vertex-pair distance over all simplices"""
    if disc.simplices is None:
        return 0.0
    return max(float(pdist(disc.points[s]).max()) if len(s) > 1 else 0.0 for s in disc.simplices)
