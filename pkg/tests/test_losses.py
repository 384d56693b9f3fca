import math

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from fullswap import losses
from fullswap.errors import InvalidInputError
from fullswap.geometry import build_interval_grid, unit_ball


def test_calibration_loss_values():
    loss = losses.make_calibration_loss(1)
    assert loss.value(0.25) == pytest.approx(0.5625)
    np.testing.assert_allclose(loss.subgradient(0.25), [-1.5])
    assert loss.loss_class == "sc-smooth"
    assert loss.lipschitz == 2.0
    np.testing.assert_allclose(loss.values_at(np.array([[0.0], [1.0]])), [1.0, 0.0])
    with pytest.raises(InvalidInputError):
        losses.make_calibration_loss(2)


def test_linear_loss_respects_lipschitz_budget():
    loss = losses.make_linear_loss([0.6, 0.8])
    assert loss.lipschitz == pytest.approx(1.0)
    assert loss.value([1.0, 1.0]) == pytest.approx(1.4)
    with pytest.raises(InvalidInputError):
        losses.make_linear_loss([3.0, 4.0], lipschitz=1.0)


def test_quadratic_form_matches_value():
    loss = losses.make_quadratic_loss([0.3, -0.2], alpha=3.0, domain=unit_ball(2))
    rng = np.random.default_rng(0)
    points = rng.uniform(-1, 1, size=(50, 2))
    np.testing.assert_allclose(loss.quadratic.values(points),
                               [loss.value_fn(p) for p in points], atol=1e-12)


def test_concave_loss_is_negative_distance():
    loss = losses.make_concave_loss([0.5], scale=2.0)
    assert loss.value(0.0) == pytest.approx(-0.5)
    assert loss.loss_class == "concave"
    assert not loss.is_convex


def test_declared_constants_pass_regularity_check():
    domain = losses.UNIT_INTERVAL
    for loss in (losses.make_calibration_loss(0),
                 losses.make_quadratic_loss([0.7], alpha=2.0, domain=domain),
                 losses.make_strongly_convex_loss([0.4], alpha=1.0, domain=domain),
                 losses.make_smooth_loss([0.2], delta=0.3, domain=domain)):
        assert losses.check_regularity(loss, trials=300, domain=domain) == []


def test_misdeclared_lipschitz_is_reported():
    domain = losses.UNIT_INTERVAL
    loss = losses.make_quadratic_loss([0.5], alpha=2.0, domain=domain, lipschitz=0.1)
    failures = losses.check_regularity(loss, trials=200)
    assert failures
    assert any("L = 0.1" in f for f in failures)


def test_piecewise_linearization_interpolates_knots():
    grid = build_interval_grid(0.0, 1.0, 0.25)
    base = losses.make_quadratic_loss([0.4], alpha=2.0, domain=losses.UNIT_INTERVAL)
    linear = losses.piecewise_linearize(base, grid)
    assert linear.loss_class == "nsc"
    assert linear.nsc_epsilon == pytest.approx(0.25)
    for knot in grid.knots:
        assert linear.value(knot) == pytest.approx(base.value(knot))
    assert linear.value(0.125) == pytest.approx((base.value(0.0) + base.value(0.25)) / 2)
    slope = (base.value(0.5) - base.value(0.25)) / 0.25
    np.testing.assert_allclose(linear.subgradient(0.25), [slope])
    last = (base.value(1.0) - base.value(0.75)) / 0.25
    np.testing.assert_allclose(linear.subgradient(1.0), [last])


@hypothesis.given(st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
def test_linearization_lies_above_convex_loss(center, x):
    grid = build_interval_grid(0.0, 1.0, 0.1)
    base = losses.make_quadratic_loss([center], alpha=2.0, domain=losses.UNIT_INTERVAL)
    assert losses.piecewise_linearize(base, grid).value(x) >= base.value(x) - 1e-12


def test_linearized_quadratic_is_nearly_strongly_convex():
    grid = build_interval_grid(0.0, 1.0, 0.1)
    base = losses.make_quadratic_loss([0.37], alpha=2.0, domain=losses.UNIT_INTERVAL)
    linear = losses.piecewise_linearize(base, grid)
    certificate = losses.check_nsc(linear, alpha=2.0, epsilon=grid.max_gap(), trials=600)
    assert certificate.passed
    assert certificate.worst() is None


def test_linear_loss_is_not_nearly_strongly_convex():
    loss = losses.make_linear_loss([1.0], domain=losses.UNIT_INTERVAL)
    certificate = losses.check_nsc(loss, alpha=1.0, epsilon=0.1, trials=300)
    assert not certificate.passed
    assert certificate.worst()[2] < 0


def test_linearization_needs_one_dimension():
    grid = build_interval_grid(0.0, 1.0, 0.5)
    with pytest.raises(InvalidInputError):
        losses.piecewise_linearize(losses.make_quadratic_loss([0.0, 0.0]), grid)


def test_parse_loss_spec():
    tag, params = losses.parse_loss_spec("quadratic:center=[0.3],alpha=2")
    assert tag == "quadratic"
    assert params == {"center": [0.3], "alpha": 2}
    loss = losses.loss_from_spec("quadratic:center=[0.3],alpha=2")
    assert loss.value(0.3) == pytest.approx(0.0)
    assert losses.loss_from_spec("calibration", b=1).value(1.0) == 0.0
    with pytest.raises(InvalidInputError):
        losses.parse_loss_spec("cubic:a=1")
    with pytest.raises(InvalidInputError):
        losses.make_loss("linear", slope=1)


def test_with_domain_replaces_domain_only():
    loss = losses.make_linear_loss([1.0])
    bounded = losses.with_domain(loss, losses.UNIT_INTERVAL)
    assert bounded.domain is losses.UNIT_INTERVAL
    assert bounded.value(0.5) == loss.value(0.5)


def test_unknown_loss_class_rejected():
    with pytest.raises(InvalidInputError):
        losses.LossSpec(value_fn=lambda x: 0.0, subgradient_fn=lambda x: x,
                        lipschitz=1.0, loss_class="weird")
    with pytest.raises(InvalidInputError):
        losses.LossSpec(value_fn=lambda x: 0.0, subgradient_fn=lambda x: x,
                        lipschitz=-1.0)


def test_smooth_loss_lipschitz_is_capped_by_delta():
    loss = losses.make_smooth_loss([0.0], delta=0.1, weight=1.0, domain=losses.UNIT_INTERVAL)
    assert loss.lipschitz == pytest.approx(0.1)
    assert not math.isfinite(losses.make_strongly_convex_loss([0.5]).beta)
