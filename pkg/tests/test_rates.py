import math

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from fullswap import oco
from fullswap.errors import InvalidInputError
from fullswap.harness import rates

HORIZONS = [100, 1000, 10_000, 100_000]


@pytest.mark.parametrize("exponent", [1 / 3, 0.0, 2 / 3])
def test_fit_recovers_power_law(exponent):
    fit = rates.fit_rate((T, 3.0 * T ** exponent) for T in HORIZONS)
    assert fit.slope == pytest.approx(exponent, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.horizons == len(HORIZONS)
    assert not fit.floored
    assert fit.predict(1e6) == pytest.approx(3.0 * 1e6 ** exponent)


def test_fit_needs_three_horizons_over_a_decade():
    with pytest.raises(InvalidInputError):
        rates.fit_rate([(100, 1.0), (1000, 2.0)])
    with pytest.raises(InvalidInputError):
        rates.fit_rate([(100, 1.0), (200, 2.0), (500, 3.0)])
    with pytest.raises(InvalidInputError):
        rates.fit_rate([(100, 1.0), (100, 1.0), (1000, 2.0)])


def test_nonpositive_regrets_are_floored():
    fit = rates.fit_rate([(10, 0.0), (100, 1.0), (1000, 10.0)])
    assert fit.floored
    assert fit.to_dict()["floored"] is True


def test_bound_shapes():
    assert rates.calibration_shape(8.0) == pytest.approx(2.0 * math.log(8.0))
    assert rates.discretized_shape(0.25, 16.0) == pytest.approx(2.0 + math.log(16.0) / 0.25)


def test_fit_constant_is_smallest_dominating_multiple():
    assert rates.fit_constant([2.0, 6.0], [1.0, 2.0]) == pytest.approx(3.0)
    with pytest.raises(InvalidInputError):
        rates.fit_constant([1.0], [0.0])


@hypothesis.settings(max_examples=50, deadline=None)
@hypothesis.given(st.integers(min_value=1, max_value=40), st.integers(min_value=4, max_value=10**6),
                  st.integers(min_value=0, max_value=10_000))
def test_lattice_learner_bounds_fit_the_discretized_shape(steps, T, seed):
    eps = 1.0 / steps
    scales = np.random.default_rng(seed).dirichlet(np.ones(steps + 1)) * T
    total = sum(oco.gdk_bound(2.0, 2.0, eps, G) for G in scales)
    constant = rates.discretized_bound_constant(2.0, 2.0)
    assert constant == pytest.approx(8.0)
    assert total <= constant * rates.discretized_shape(eps, T)


def test_discretized_bound_constant_rejects_bad_parameters():
    with pytest.raises(InvalidInputError):
        rates.discretized_bound_constant(0.0, 2.0)
