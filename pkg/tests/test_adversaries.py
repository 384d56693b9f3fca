import numpy as np
import pytest

from fullswap.errors import ConfigurationError
from fullswap.games import nfg_to_structured
from fullswap.geometry import unit_ball
from fullswap.harness import adversaries
from fullswap.harness.adversaries import ScaledSequenceAdversary, make_adversary
from fullswap.losses import UNIT_INTERVAL
from fullswap.swap_engine import MixedAction


def _forecast(value):
    return MixedAction.point_mass(0, np.array([[value]]))


def _outcomes(adversary, forecasts):
    return [adversary.next_outcome(_forecast(f)) for f in forecasts]


def test_bernoulli_extremes():
    assert _outcomes(make_adversary("bernoulli(1.0)"), [0.5] * 20) == [1] * 20
    assert _outcomes(make_adversary("bernoulli(0)"), [0.5] * 20) == [0] * 20


def test_bernoulli_frequency():
    adversary = make_adversary("bernoulli(0.7)", np.random.default_rng(3))
    outcomes = _outcomes(adversary, [0.5] * 2000)
    assert np.mean(outcomes) == pytest.approx(0.7, abs=0.05)
    assert adversary.get_name() == "bernoulli(0.7)"


def test_periodic_pattern_repeats():
    adversary = make_adversary("periodic(011)")
    assert _outcomes(adversary, [0.5] * 7) == [0, 1, 1, 0, 1, 1, 0]
    assert adversary.history == [0, 1, 1, 0, 1, 1, 0]


def test_adaptive_opposite_answers_against_forecast():
    adversary = make_adversary("adaptive-opposite")
    assert _outcomes(adversary, [0.2, 0.8, 0.5]) == [1, 0, 0]


def test_adaptive_mean_revert_follows_history():
    adversary = make_adversary("adaptive-mean-revert")
    assert _outcomes(adversary, [0.5] * 4) == [1, 0, 0, 1]


@pytest.mark.parametrize("spec", ["bernoulli(1.5)", "bernoulli(abc)", "bernoulli", "periodic(012)",
                                  "periodic()", "9x", "", "oracle(1)"])
def test_bad_specs_raise(spec):
    with pytest.raises(ConfigurationError):
        make_adversary(spec, body=UNIT_INTERVAL)


def test_parse_adversary_spec():
    assert adversaries.parse_adversary_spec("periodic(01)") == ("periodic", "01")
    assert adversaries.parse_adversary_spec("adaptive-opposite") == ("adaptive-opposite", None)


def test_linear_random_is_seeded_and_bounded():
    first = make_adversary("linear-random(3)", body=unit_ball(2), lipschitz=2.0)
    second = make_adversary("linear-random(3)", body=unit_ball(2), lipschitz=2.0)
    for _ in range(20):
        a, b = first.next_loss(), second.next_loss()
        np.testing.assert_allclose(a.subgradient([0.0, 0.0]), b.subgradient([0.0, 0.0]))
        assert np.linalg.norm(a.subgradient([0.0, 0.0])) <= 2.0 + 1e-12
    with pytest.raises(ConfigurationError):
        make_adversary("linear-random")
    with pytest.raises(ConfigurationError):
        make_adversary("linear-random(x)", body=unit_ball(2))


def test_quadratic_random_centers_lie_in_body():
    adversary = make_adversary("quadratic-random", np.random.default_rng(0), body=UNIT_INTERVAL,
                               alpha=2.0)
    for _ in range(20):
        loss = adversary.next_loss()
        center = -loss.quadratic.c / (2.0 * loss.quadratic.a)
        assert UNIT_INTERVAL.membership(center)
        assert loss.alpha == 2.0


def test_zero_sum_best_response():
    game = nfg_to_structured(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    adversary = make_adversary("zero-sum-best-response", game=game)
    np.testing.assert_array_equal(adversary.next_strategy([1.0, 0.0]), [0.0, 1.0])
    np.testing.assert_array_equal(adversary.next_strategy([0.5, 0.5]), [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        make_adversary("zero-sum-best-response")


@pytest.mark.parametrize("schedule", ["convex", "gds", "gdk"])
def test_scaled_sequence_scales(schedule):
    adversary = ScaledSequenceAdversary(schedule, np.random.default_rng(2), alpha=2.0)
    scales = [adversary.next_round(np.array([0.3]))[1] for _ in range(200)]
    assert scales[0] == 1.0
    assert all(0.0 <= g <= 1.0 for g in scales)
    assert 0.0 in scales
    with pytest.raises(ConfigurationError):
        ScaledSequenceAdversary("adam", np.random.default_rng(0))
