import math
from pathlib import Path

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from fullswap import swap_engine
from fullswap.errors import ConfigurationError, InvalidInputError
from fullswap.geometry import BoxBody, build_box_net, build_interval_grid, build_kuhn_triangulation, unit_ball
from fullswap.losses import (
    UNIT_INTERVAL,
    make_calibration_loss,
    make_linear_loss,
    make_quadratic_loss,
    piecewise_linearize,
)
from fullswap.oco import MwuLearner
from fullswap.swap_engine import MarkovPolicy, MixedAction, SwapEngine, stationary_distribution


def test_mixed_action_validation():
    with pytest.raises(InvalidInputError):
        MixedAction(np.array([0, 1]), np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        MixedAction(np.array([0, 0]), np.array([0.5, 0.5]))
    action = MixedAction.from_weights([2, 0, 2], [0.25, 0.5, 0.25], np.array([[0.0], [0.5], [1.0]]))
    np.testing.assert_array_equal(action.support, [0, 2])
    np.testing.assert_allclose(action.probabilities, [0.5, 0.5])
    np.testing.assert_allclose(action.mean(), [0.5])
    np.testing.assert_allclose(action.dense(3), [0.5, 0.0, 0.5])


def test_expected_loss():
    points = np.array([[0.0], [1.0]])
    action = MixedAction.from_dense(np.array([0.25, 0.75]), points)
    assert action.expected_loss(make_calibration_loss(1)) == pytest.approx(0.25)


def test_markov_policy_rejects_non_stochastic_rows():
    with pytest.raises(InvalidInputError):
        MarkovPolicy.from_dense([[0.5, 0.4], [0.0, 1.0]])
    with pytest.raises(InvalidInputError):
        MarkovPolicy.from_dense([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_stationary_distribution_of_two_state_chain():
    x = stationary_distribution(MarkovPolicy.from_dense([[0.5, 0.5], [0.2, 0.8]]))
    np.testing.assert_allclose(x.dense(2), [2 / 7, 5 / 7], atol=1e-12)


def test_identity_chain_resolves_to_uniform():
    x = stationary_distribution(MarkovPolicy.from_dense(np.eye(3)))
    np.testing.assert_allclose(x.dense(3), np.full(3, 1 / 3))


def test_absorbing_chain():
    x = stationary_distribution(MarkovPolicy.from_dense([[0.0, 1.0], [0.0, 1.0]]))
    np.testing.assert_allclose(x.dense(2), [0.0, 1.0])
    assert len(x) == 1


def test_reducible_chain_with_transient_state():
    chain = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]]
    x = stationary_distribution(MarkovPolicy.from_dense(chain))
    np.testing.assert_allclose(x.dense(3), [0.5, 0.5, 0.0])


@hypothesis.settings(max_examples=50)
@hypothesis.given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=2 ** 31))
def test_stationary_fixed_point(k, seed):
    rng = np.random.default_rng(seed)
    dense = rng.uniform(size=(k, k)) * (rng.uniform(size=(k, k)) < 0.5)
    dense[np.arange(k), rng.integers(0, k, size=k)] += 1.0
    dense /= dense.sum(axis=1, keepdims=True)
    Q = MarkovPolicy.from_dense(dense)
    x = stationary_distribution(Q).dense(k)
    assert np.abs(x @ dense - x).sum() <= 1e-9
    assert x.sum() == pytest.approx(1.0)


def test_power_iteration_path_matches_direct_solve(monkeypatch):
    dense = np.array([[0.1, 0.9, 0.0], [0.0, 0.2, 0.8], [0.7, 0.0, 0.3]])
    direct = stationary_distribution(MarkovPolicy.from_dense(dense)).dense(3)
    monkeypatch.setattr(swap_engine, "DIRECT_SOLVE_LIMIT", 1)
    iterated = stationary_distribution(MarkovPolicy.from_dense(dense)).dense(3)
    np.testing.assert_allclose(iterated, direct, atol=1e-8)


def test_projection_rounding_is_nearest_point():
    grid = build_interval_grid(0.0, 1.0, 0.25)
    action = swap_engine.round_projection([0.3], grid)
    np.testing.assert_array_equal(action.support, [1])


@hypothesis.given(st.floats(min_value=0.0, max_value=1.0))
def test_interval_rounding_preserves_mean(x):
    grid = build_interval_grid(0.0, 1.0, 0.1)
    action = swap_engine.round_interval([x], grid)
    assert len(action) <= 2
    assert not action.clamped
    assert float(action.mean()[0]) == pytest.approx(x, abs=1e-12)


def test_interval_rounding_is_lossless_for_linearized_losses():
    grid = build_interval_grid(0.0, 1.0, 0.2)
    rng = np.random.default_rng(4)
    for _ in range(100):
        loss = piecewise_linearize(make_quadratic_loss([rng.uniform()], alpha=rng.uniform(0.5, 4.0)), grid)
        x = float(rng.uniform())
        action = swap_engine.round_interval([x], grid)
        assert abs(loss.value([x]) - action.expected_loss(loss)) <= 1e-12


def test_interval_rounding_clamps_outside_points():
    grid = build_interval_grid(0.0, 1.0, 0.5)
    action = swap_engine.round_interval([1.5], grid)
    assert action.clamped
    np.testing.assert_array_equal(action.support, [2])


def test_barycentric_rounding_preserves_mean_in_square():
    disc = build_kuhn_triangulation(BoxBody([0.0, 0.0], [1.0, 1.0]), 0.4)
    rng = np.random.default_rng(9)
    for q in rng.uniform(size=(50, 2)):
        action = swap_engine.round_barycentric(q, disc)
        assert len(action) <= 3
        np.testing.assert_allclose(action.mean(), q, atol=1e-9)


def test_rounding_procedure_validates_discretization():
    net = build_box_net(BoxBody([0.0, 0.0], [1.0, 1.0]), 0.5)
    with pytest.raises(ConfigurationError):
        swap_engine.RoundingProcedure("barycentric", net)
    with pytest.raises(ConfigurationError):
        swap_engine.RoundingProcedure("nearest", net)


def test_vectorized_rounding_matches_single_rounding():
    grid = build_interval_grid(0.0, 1.0, 0.25)
    procedure = swap_engine.RoundingProcedure("barycentric", grid)
    qs = np.array([[0.1], [0.5], [0.9], [1.0]])
    rows, cols, weights = procedure.apply_many(qs)
    dense = np.zeros((4, grid.size))
    np.add.at(dense, (rows, cols), weights)
    for s, q in enumerate(qs):
        np.testing.assert_allclose(dense[s], procedure.apply(q).dense(grid.size), atol=1e-12)


@pytest.mark.parametrize("loss_class, d, algorithm, discretizer, exponent", [
    ("general", 1, "bmns", "net", 2 / 3),
    ("smooth", 2, "bmns", "triangulation", 4 / 6),
    ("concave", 2, "bmns", "boundary-polytope", 3 / 5),
    ("linear", 1, "bmns", "boundary-polytope", 2 / 4),
    ("strongly-convex", 1, "bmcs", "net", 1 / 2),
    ("sc-smooth", 1, "bmcs", "triangulation", 1 / 3),
])
def test_configure_from_table_rows(loss_class, d, algorithm, discretizer, exponent):
    config = swap_engine.configure_from_table(loss_class, d, 1000, lipschitz=1.0, alpha=1.0)
    assert config.algorithm == algorithm
    assert config.discretizer == discretizer
    assert config.exponent == pytest.approx(exponent)
    assert config.to_dict()["row"] == config.row


def test_configure_epsilons():
    T = 10_000
    assert swap_engine.configure_from_table("general", 1, T).epsilon == pytest.approx(T ** (-1 / 3))
    assert swap_engine.configure_from_table("sc-smooth", 2, T).epsilon == pytest.approx(T ** (-1 / 4))
    strong = swap_engine.configure_from_table("strongly-convex", 1, T, lipschitz=4.0, alpha=1.0)
    assert strong.epsilon == pytest.approx(math.sqrt(4.0 / T))
    assert strong.rounding == "projection"


def test_configure_rejects_unknown_class():
    with pytest.raises(ConfigurationError):
        swap_engine.configure_from_table("cubic", 1, 100)
    with pytest.raises(ConfigurationError):
        swap_engine.configure_from_table("sc-smooth", 1, 0)


def test_decomposition_delta_per_discretizer():
    net = swap_engine.configure_from_table("general", 1, 1000)
    assert swap_engine.decomposition_delta(net, 2.0, math.inf) == pytest.approx(2.0 * net.epsilon)
    tri = swap_engine.configure_from_table("sc-smooth", 1, 1000)
    assert swap_engine.decomposition_delta(tri, 2.0, 8.0) == pytest.approx(3.0 * tri.epsilon ** 2)
    poly = swap_engine.configure_from_table("linear", 1, 1000)
    assert swap_engine.decomposition_delta(poly, 2.0, 0.0) == pytest.approx(2.0 * poly.epsilon ** 2)


def test_engine_plays_stationary_distribution():
    config = swap_engine.configure_from_table("sc-smooth", 1, 200)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=2.0, alpha=2.0, record=True)
    rng = np.random.default_rng(0)
    for _ in range(30):
        action, engine = swap_engine.bm_round(engine, make_calibration_loss(int(rng.integers(0, 2))))
        assert action.probabilities.sum() == pytest.approx(1.0)
    Q, _ = engine.policy()
    x = engine.next_action().dense(engine.size)
    assert np.abs(Q.matrix.T @ x - x).sum() <= 1e-9
    assert len(engine.trace) == 30


def test_engine_observe_requires_action():
    config = swap_engine.configure_from_table("general", 1, 100)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=1.0)
    with pytest.raises(ConfigurationError):
        engine.observe(make_linear_loss([1.0]))


def test_bmns_engine_moves_toward_good_points():
    config = swap_engine.configure_from_table("general", 1, 500)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=1.0)
    for _ in range(500):
        engine.next_action()
        engine.observe(make_linear_loss([1.0]))
    action = engine.next_action()
    assert float(action.mean()[0]) < 0.2


def test_engine_rejects_mismatched_learners():
    grid = build_interval_grid(0.0, 1.0, 0.5)

    with pytest.raises(ConfigurationError):
        SwapEngine(grid, "bmcs", lambda: MwuLearner(grid.points),
                   rounding=swap_engine.RoundingProcedure("interval", grid))
    with pytest.raises(ConfigurationError):
        SwapEngine(grid, "bmns", lambda: MwuLearner(grid.points),
                   rounding=swap_engine.RoundingProcedure("interval", grid))


def test_engine_on_ball_with_net():
    config = swap_engine.configure_from_table("strongly-convex", 2, 100, lipschitz=4.0, alpha=2.0)
    engine = SwapEngine.from_config(config, unit_ball(2), lipschitz=4.0, alpha=2.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        action = engine.next_action()
        engine.observe(make_quadratic_loss(unit_ball(2).sample(rng, 1)[0], alpha=2.0, lipschitz=4.0))
        assert all(np.linalg.norm(p) <= 1.0 + 1e-9 for p in action.points)


def test_write_trace(tmp_path):
    config = swap_engine.configure_from_table("sc-smooth", 1, 50)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=2.0, alpha=2.0, record=True)
    for b in (0, 1, 1):
        engine.next_action()
        engine.observe(make_calibration_loss(b))
    path = engine.write_trace(tmp_path / "trace.csv")
    lines = Path(path).read_text().strip().splitlines()
    assert lines[0].startswith("t,support,probabilities")
    assert len(lines) == 4
