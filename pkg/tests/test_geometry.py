import math

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from fullswap import geometry
from fullswap.errors import (
    GeometryInconsistencyError,
    InvalidInputError,
    UnsupportedBodyError,
    UnsupportedDimensionError,
)


UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def test_as_point_coerces_scalars():
    np.testing.assert_array_equal(geometry.as_point(0.3), [0.3])
    with pytest.raises(InvalidInputError):
        geometry.as_point([np.nan])
    with pytest.raises(InvalidInputError):
        geometry.as_point([0.1, 0.2], dimension=3)


def test_interval_rejects_inverted_bounds():
    with pytest.raises(InvalidInputError):
        geometry.interval(1.0, 0.0)
    with pytest.raises(InvalidInputError):
        geometry.interval(0.0, math.inf)


def test_box_projection_clips():
    box = geometry.BoxBody([0.0, 0.0], [1.0, 2.0])
    np.testing.assert_allclose(box.project([-1.0, 3.0]), [0.0, 2.0])
    assert box.membership([0.5, 1.5])
    assert not box.membership([1.5, 0.5])
    np.testing.assert_allclose(box.linear_minimizer([1.0, -1.0]), [0.0, 2.0])


def test_ball_projection_and_linear_minimizer():
    ball = geometry.unit_ball(2)
    np.testing.assert_allclose(ball.project([2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(ball.project([0.3, 0.4]), [0.3, 0.4])
    np.testing.assert_allclose(ball.linear_minimizer([0.0, 2.0]), [0.0, -1.0])
    np.testing.assert_allclose(ball.linear_minimizer([0.0, 0.0]), [0.0, 0.0])


def test_polytope_projection_onto_square():
    square = geometry.PolytopeBody(UNIT_SQUARE)
    assert square.frame.rank == 2
    np.testing.assert_allclose(square.project([2.0, 0.5]), [1.0, 0.5], atol=1e-9)
    np.testing.assert_allclose(square.project([0.25, 0.75]), [0.25, 0.75], atol=1e-9)
    np.testing.assert_array_equal(square.extreme_indices, [0, 1, 2, 3])


def test_degenerate_polytope_uses_affine_hull():
    simplex = geometry.PolytopeBody(np.eye(3))
    assert simplex.frame.rank == 2
    np.testing.assert_allclose(simplex.project([1.0, 1.0, 1.0]), [1 / 3, 1 / 3, 1 / 3], atol=1e-9)
    assert simplex.membership([0.2, 0.3, 0.5])
    assert not simplex.membership([0.5, 0.5, 0.5])


@hypothesis.given(st.lists(st.floats(min_value=-5.0, max_value=5.0), min_size=2, max_size=2))
def test_projection_is_idempotent(values):
    for body in (geometry.unit_ball(2), geometry.BoxBody([0.0, 0.0], [1.0, 1.0]),
                 geometry.PolytopeBody(UNIT_SQUARE)):
        once = body.project(values)
        assert body.membership(once, tol=1e-8)
        np.testing.assert_allclose(body.project(once), once, atol=1e-9)


def test_interval_grid_knots():
    grid = geometry.build_interval_grid(0.0, 1.0, 0.25)
    np.testing.assert_allclose(grid.knots, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert grid.kind == "triangulation"
    assert grid.max_gap() == pytest.approx(0.25)

    coarse = geometry.build_interval_grid(0.0, 1.0, 0.3)
    assert coarse.size == 5
    assert coarse.max_gap() <= 0.3


def test_interval_grid_rejects_bad_epsilon():
    with pytest.raises(InvalidInputError):
        geometry.build_interval_grid(0.0, 1.0, 0.0)
    with pytest.raises(InvalidInputError):
        geometry.build_interval_grid(0.0, 1.0, 2.0)


def test_grid_from_knots_requires_increasing():
    with pytest.raises(InvalidInputError):
        geometry.grid_from_knots([0.0, 0.5, 0.5, 1.0])
    grid = geometry.grid_from_knots([0.0, 0.1, 1.0])
    assert grid.epsilon == pytest.approx(0.9)


def test_nearest_index_breaks_ties_low():
    grid = geometry.build_interval_grid(0.0, 1.0, 0.5)
    assert grid.nearest_index(0.25) == 0
    assert grid.nearest_index(0.8) == 2


def test_knots_need_one_dimension():
    disc = geometry.build_box_net(geometry.BoxBody([0.0, 0.0], [1.0, 1.0]), 0.5)
    with pytest.raises(UnsupportedDimensionError):
        disc.knots


@pytest.mark.parametrize("body", [
    geometry.BoxBody([0.0, 0.0], [1.0, 1.0]),
    geometry.unit_ball(2),
    geometry.PolytopeBody(UNIT_SQUARE),
])
def test_net_covers_body(body):
    eps = 0.3
    disc = geometry.build_net(body, eps)
    samples = body.sample(np.random.default_rng(7), 2000)
    assert disc.kind == "net"
    assert geometry.covering_radius(disc, samples) <= eps + 1e-9
    assert all(body.membership(p, tol=1e-9) for p in disc.points)


def test_kuhn_triangulation_of_square_is_exact():
    body = geometry.BoxBody([0.0, 0.0], [1.0, 1.0])
    eps = 0.3
    disc = geometry.build_kuhn_triangulation(body, eps)
    assert disc.simplices.shape[1] == 3
    assert geometry.simplex_diameter(disc) <= 2 * eps + 1e-12
    samples = body.sample(np.random.default_rng(3), 500)
    assert geometry.hull_defect(disc, samples) <= 1e-9


def test_kuhn_triangulation_reconstructs_points_in_cube():
    body = geometry.BoxBody(np.zeros(3), np.ones(3))
    disc = geometry.build_kuhn_triangulation(body, 0.5)
    rng = np.random.default_rng(11)
    for x in body.sample(rng, 100):
        indices, weights = geometry.locate_simplex(x, disc)
        assert len(indices) <= 4
        assert np.all(weights >= 0)
        assert weights.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(weights @ disc.points[indices], x, atol=1e-9)


def test_ball_triangulation_hull_is_close():
    ball = geometry.unit_ball(2)
    eps = 0.3
    disc = geometry.build_kuhn_triangulation(ball, eps)
    samples = ball.sample(np.random.default_rng(5), 500)
    assert geometry.hull_defect(disc, samples) <= eps ** 2 + 1e-9
    assert all(ball.membership(p, tol=1e-9) for p in disc.points)


@pytest.mark.parametrize("d, eps", [(2, 0.3), (2, 0.2), (3, 0.5)])
def test_ball_triangulation_simplices_are_small(d, eps):
    disc = geometry.build_kuhn_triangulation(geometry.unit_ball(d), eps)
    assert disc.simplices.shape[1] == d + 1
    assert geometry.simplex_diameter(disc) <= 2 * eps + 1e-12


@pytest.mark.parametrize("body", [
    geometry.interval(0.0, 1.0),
    geometry.BoxBody([0.0, 0.0], [1.0, 1.0]),
    geometry.unit_ball(2),
], ids=["interval", "box", "ball"])
def test_dense_samples_are_covered_and_located(body):
    eps = 0.25
    samples = body.sample(np.random.default_rng(2024), 10_000)
    net = geometry.build_net(body, eps)
    assert geometry.covering_radius(net, samples) <= eps + 1e-9

    disc = geometry.build_kuhn_triangulation(body, eps)
    worst = 0.0
    for x in samples:
        indices, weights = geometry.locate_simplex(x, disc)
        assert len(indices) <= body.dimension + 1
        assert np.all(weights >= -1e-9)
        assert weights.sum() == pytest.approx(1.0)
        worst = max(worst, float(np.linalg.norm(weights @ disc.points[indices] - x)))
    assert worst <= eps ** 2 + 1e-9


def test_triangulation_dimension_limit():
    with pytest.raises(UnsupportedBodyError):
        geometry.build_kuhn_triangulation(geometry.BoxBody(np.zeros(4), np.ones(4)), 0.9)


def test_boundary_polygon_of_disc():
    ball = geometry.unit_ball(2)
    eps = 0.01
    disc = geometry.build_boundary_polytope(ball, eps, allow_relaxed=False)
    m = disc.size
    assert not disc.relaxed
    assert 1.0 - math.cos(math.pi / m) <= eps ** 2 + 1e-15
    assert 1.0 - math.cos(math.pi / (m - 1)) > eps ** 2
    np.testing.assert_allclose(np.linalg.norm(disc.points, axis=1), 1.0)


def test_boundary_polytope_relaxed_epsilon():
    ball = geometry.unit_ball(2)
    disc = geometry.build_boundary_polytope(ball, 0.2)
    assert disc.relaxed
    with pytest.raises(InvalidInputError):
        geometry.build_boundary_polytope(ball, 0.2, allow_relaxed=False)


def test_boundary_polytope_of_sphere_bounds_defect():
    ball = geometry.unit_ball(3)
    eps = 0.3
    disc = geometry.build_boundary_polytope(ball, eps)
    samples = ball.sample(np.random.default_rng(2), 300)
    assert geometry.hull_defect(disc, samples) <= eps ** 2 + 1e-9


def test_boundary_polytope_of_vertex_polytope_keeps_extremes():
    points = np.vstack([UNIT_SQUARE, [[0.5, 0.5]]])
    disc = geometry.build_boundary_polytope(geometry.PolytopeBody(points), 0.01)
    assert disc.size == 4
    assert not np.any(np.all(np.isclose(disc.points, [0.5, 0.5]), axis=1))


def test_locate_simplex_on_interval():
    grid = geometry.build_interval_grid(0.0, 1.0, 0.5)
    indices, weights = geometry.locate_simplex(0.6, grid)
    np.testing.assert_array_equal(indices, [1, 2])
    np.testing.assert_allclose(weights, [0.8, 0.2])


def test_locate_simplex_needs_simplices():
    disc = geometry.build_net(geometry.interval(0.0, 1.0), 0.5)
    with pytest.raises(InvalidInputError):
        geometry.locate_simplex(0.5, disc)


def test_scan_locator_rejects_far_point():
    disc = geometry.Discretization.from_json({
        "kind": "triangulation", "epsilon": 0.5,
        "points": UNIT_SQUARE.tolist(), "simplices": [[0, 1, 3], [0, 2, 3]],
    })
    indices, weights = geometry.locate_simplex([0.25, 0.5], disc)
    np.testing.assert_allclose(weights @ disc.points[indices], [0.25, 0.5], atol=1e-9)
    with pytest.raises(GeometryInconsistencyError):
        geometry.locate_simplex([3.0, 3.0], disc)


def test_discretization_saves_and_loads(tmp_path):
    grid = geometry.build_interval_grid(0.0, 1.0, 0.2)
    path = grid.save(tmp_path / "grid.json")
    loaded = geometry.Discretization.load(path)
    np.testing.assert_allclose(loaded.points, grid.points)
    np.testing.assert_array_equal(loaded.simplices, grid.simplices)
    indices, weights = geometry.locate_simplex(0.5, loaded)
    assert weights @ loaded.points[indices, 0] == pytest.approx(0.5)


def test_barycentric_weights_recover_point():
    triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    weights = geometry.barycentric_weights(np.array([0.2, 0.3]), triangle)
    np.testing.assert_allclose(weights, [0.5, 0.2, 0.3], atol=1e-12)


def test_tolerances_reject_unknown_keys():
    assert geometry.Tolerances.from_dict({"membership": 1e-6}).membership == 1e-6
    with pytest.raises(InvalidInputError):
        geometry.Tolerances.from_dict({"speed": 1.0})
