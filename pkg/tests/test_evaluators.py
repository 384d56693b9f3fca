import numpy as np
import pytest

from fullswap import swap_engine
from fullswap.errors import ConfigurationError, InvalidInputError, UnsupportedEvaluationError
from fullswap.geometry import build_interval_grid, unit_ball
from fullswap.harness import evaluators
from fullswap.losses import (
    UNIT_INTERVAL,
    make_calibration_loss,
    make_linear_loss,
    make_quadratic_loss,
    piecewise_linearize,
)
from fullswap.swap_engine import MixedAction, SwapEngine


def _point(value):
    return MixedAction.point_mass(0, np.array([np.atleast_1d(value)], dtype=float))


def test_point_mass_against_repeated_outcome():
    plays = [_point(0.5), _point(0.5)]
    losses = [make_calibration_loss(1), make_calibration_loss(1)]
    assert evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL) == pytest.approx(0.5)


def test_zero_losses_have_zero_regret():
    plays = [_point(x) for x in (0.1, 0.5, 0.9)]
    losses = [make_linear_loss([0.0], domain=UNIT_INTERVAL)] * 3
    assert evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL) == pytest.approx(0.0)


@pytest.mark.parametrize("t", [1, 5, 20])
def test_linear_loss_regret_grows_linearly(t):
    plays = [_point(0.5)] * t
    losses = [make_linear_loss([1.0], domain=UNIT_INTERVAL)] * t
    assert evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL) == pytest.approx(0.5 * t)


def test_regret_is_summed_per_played_point():
    plays = [MixedAction(np.array([0, 1]), np.array([0.5, 0.5]), np.array([[0.0], [1.0]]))] * 4
    losses = [make_linear_loss([1.0], domain=UNIT_INTERVAL)] * 4
    accumulator = evaluators.FullSwapAccumulator(UNIT_INTERVAL)
    for action, loss in zip(plays, losses):
        accumulator.add_round(action, loss)
    breakdown = accumulator.breakdown()
    assert breakdown[(0.0,)] == pytest.approx(0.0)
    assert breakdown[(1.0,)] == pytest.approx(2.0)
    assert accumulator.total() == pytest.approx(2.0)


def test_knot_minimization_matches_knot_search():
    grid = build_interval_grid(0.0, 1.0, 0.1)
    rng = np.random.default_rng(4)
    losses = [piecewise_linearize(make_quadratic_loss([c], alpha=2.0, domain=UNIT_INTERVAL), grid)
              for c in rng.uniform(size=30)]
    plays = [_point(grid.knots[i]) for i in rng.integers(0, grid.size, size=30)]
    closed = evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL)
    at_knots = evaluators.full_swap_regret_discrete(plays, losses, grid.points)
    searched = evaluators.full_swap_regret_grid(plays, losses, UNIT_INTERVAL)
    assert closed == pytest.approx(at_knots, abs=1e-9)
    assert searched >= closed - 1e-12
    assert closed >= -1e-12


def test_discrete_comparators_never_beat_continuous():
    rng = np.random.default_rng(9)
    plays = [_point(x) for x in rng.uniform(size=20)]
    losses = [make_calibration_loss(int(b)) for b in rng.integers(0, 2, size=20)]
    continuous = evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL)
    discrete = evaluators.full_swap_regret_discrete(plays, losses, np.linspace(0, 1, 5)[:, None])
    assert discrete <= continuous + 1e-12


def test_ball_quadratic_uses_closed_form():
    ball = unit_ball(2)
    plays = [_point([0.0, 0.0])]
    losses = [make_quadratic_loss([0.3, 0.4], alpha=2.0, domain=ball)]
    assert evaluators.full_swap_regret_eval(plays, losses, ball) == pytest.approx(0.25)


def test_evaluator_input_checks():
    with pytest.raises(InvalidInputError):
        evaluators.full_swap_regret_eval([_point(0.5)], [], UNIT_INTERVAL)
    with pytest.raises(UnsupportedEvaluationError):
        evaluators.full_swap_regret_grid([_point([0.0, 0.0])],
                                         [make_linear_loss([1.0, 0.0])], unit_ball(2))
    with pytest.raises(InvalidInputError):
        evaluators.scaled_regret_series([np.array([0.5])], [make_linear_loss([1.0])], [],
                                        UNIT_INTERVAL)


def test_scaled_regret_series_prefixes():
    loss = make_linear_loss([1.0], domain=UNIT_INTERVAL)
    series = evaluators.scaled_regret_series([np.array([1.0])] * 3, [loss] * 3, [1.0, 0.5, 0.0],
                                             UNIT_INTERVAL)
    np.testing.assert_allclose(series, [1.0, 1.5, 1.5])


def test_checkpoint_rounds():
    rounds = evaluators.checkpoint_rounds(1000, count=20)
    assert rounds[0] == 1
    assert rounds[-1] == 1000
    assert rounds == sorted(set(rounds))
    assert evaluators.checkpoint_rounds(3) == [1, 2, 3]
    with pytest.raises(InvalidInputError):
        evaluators.checkpoint_rounds(0)


def _run_linear_engine(T, seed, record=True):
    config = swap_engine.configure_from_table("linear", 1, T)
    engine = SwapEngine.from_config(config, UNIT_INTERVAL, lipschitz=1.0, record=record)
    rng = np.random.default_rng(seed)
    plays, losses = [], []
    for _ in range(T):
        plays.append(engine.next_action())
        loss = make_linear_loss([rng.uniform(-1.0, 1.0)], domain=UNIT_INTERVAL)
        engine.observe(loss)
        losses.append(loss)
    return engine, plays, losses


@pytest.mark.parametrize("seed", [0, 1])
def test_decomposition_bounds_full_swap_regret(seed):
    T = 150
    engine, plays, losses = _run_linear_engine(T, seed)
    result = evaluators.decomposition_eval(engine, lipschitz=1.0, checkpoints=[10, 50, T])
    assert result.delta == pytest.approx(swap_engine.decomposition_delta(engine.config, 1.0, np.inf))
    assert result.delta_T == pytest.approx(result.delta * T)
    assert [t for t, _, _ in result.series] == [10, 50, T]
    assert result.series[-1][2] == pytest.approx(result.sum_reg_s)
    fsr = evaluators.full_swap_regret_eval(plays, losses, UNIT_INTERVAL)
    assert fsr <= result.bound + 1e-6


def test_decomposition_needs_recorded_trace():
    engine, _, _ = _run_linear_engine(5, 0, record=False)
    with pytest.raises(ConfigurationError):
        evaluators.decomposition_eval(engine, lipschitz=1.0)
