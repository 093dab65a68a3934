import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jitterinv.errors import DegenerateIntervalError, ValidationError
from jitterinv.inversion import InversionInstance, inversion_probability_closed_form
from jitterinv.jitter import (
    JitterMechanism,
    Kind,
    jitter_interval,
    make_mechanism,
    route_delay_model,
    route_metric,
    sample_jitter,
)
from jitterinv.uniform_sum import UniformSpec

metrics = st.floats(1e-6, 1.0)


def test_interval_examples():
    assert jitter_interval(make_mechanism("rfc5148", 100), 0.3) == UniformSpec(0, 100)
    assert jitter_interval(make_mechanism("adaptive", 100), 0.4) == UniformSpec(60, 100)
    assert jitter_interval(make_mechanism("bounded-adaptive", 100, c=30), 0.4) == UniformSpec(60, 90)
    assert jitter_interval(make_mechanism("window", 100, alpha=0.0), 0.7) == UniformSpec(0, 100)
    assert jitter_interval(make_mechanism("window", 100, alpha=0.25), 0.7) == UniformSpec(25, 100)


def test_route_model_examples():
    ba = make_mechanism("bounded-adaptive", 100, c=30)
    assert route_delay_model(ba, [1.0, 0.5]).intervals() == [(0, 30), (50, 80)]
    rfc = make_mechanism("rfc5148", 250)
    assert route_delay_model(rfc, [0.9, 0.5, 1, 0.7, 0.6, 0.55]).intervals() == [(0, 250)] * 6
    assert route_delay_model(make_mechanism("adaptive", 250), [1.0]).intervals() == [(0, 250)]


def test_route_metric_examples():
    assert route_metric([0.5, 1.0]) == 0.75
    assert route_metric([0.37]) == 0.37
    assert route_metric([0.8] * 6) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ValidationError):
        route_metric([])


def test_names_parse():
    assert Kind.parse("bounded_adaptive") is Kind.BOUNDED_ADAPTIVE
    assert Kind.parse(" RFC5148 ") is Kind.RFC5148
    with pytest.raises(ValidationError):
        Kind.parse("gaussian")


def test_parameter_validation():
    with pytest.raises(ValidationError):
        JitterMechanism(Kind.BOUNDED_ADAPTIVE, 100)
    with pytest.raises(ValidationError):
        JitterMechanism(Kind.BOUNDED_ADAPTIVE, 100, c=101)
    with pytest.raises(ValidationError):
        JitterMechanism(Kind.WINDOW, 100, alpha=1.5)
    with pytest.raises(ValidationError):
        JitterMechanism(Kind.RFC5148, 0)
    for bad in (0.0, -0.1, 1.01, math.nan):
        with pytest.raises(ValidationError):
            jitter_interval(make_mechanism("adaptive", 100), bad)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["rfc5148", "window", "adaptive", "bounded-adaptive"]),
    metrics,
    st.floats(1.0, 500.0),
    st.floats(0.01, 1.0),
    st.floats(0.0, 0.99),
)
def test_interval_containment(name, m, j_max, c_frac, alpha):
    c = c_frac * j_max
    mech = make_mechanism(name, j_max, alpha, c)
    iv = jitter_interval(mech, m)
    cap = j_max + (c if name == "bounded-adaptive" else 0.0)
    assert 0.0 <= iv.lower < iv.upper <= cap + 1e-9 * cap
    if name != "bounded-adaptive":
        assert iv.upper == j_max


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 0.999), st.floats(1e-4, 1e-3), st.floats(1.0, 500.0))
def test_metric_monotonicity(m, dm, j_max):
    better = min(1.0, m + dm)
    for mech in (make_mechanism("adaptive", j_max), make_mechanism("bounded-adaptive", j_max, c=0.3 * j_max)):
        assert jitter_interval(mech, better).lower < jitter_interval(mech, m).lower
    ba = make_mechanism("bounded-adaptive", j_max, c=0.3 * j_max)
    assert jitter_interval(ba, m).width == pytest.approx(0.3 * j_max, rel=1e-12)


def test_bounded_adaptive_not_clamped():
    iv = jitter_interval(make_mechanism("bounded-adaptive", 100, c=30), 0.1)
    assert iv.upper == pytest.approx(120.0)


def test_deterministic_rejected_by_analytic_path():
    det = make_mechanism("deterministic", 250)
    assert not det.is_analytic
    with pytest.raises(DegenerateIntervalError, match="fixed"):
        jitter_interval(det, 0.8)
    with pytest.raises(DegenerateIntervalError):
        route_delay_model(det, [0.9, 0.9])
    with pytest.raises(DegenerateIntervalError):
        route_delay_model(make_mechanism("window", 100, alpha=1.0), [0.5])


def test_sample_jitter_examples():
    rng = np.random.default_rng(0)
    det = make_mechanism("deterministic", 250)
    assert {sample_jitter(det, 0.6, rng) for _ in range(100)} == {250.0}
    ba = make_mechanism("bounded-adaptive", 250, c=40)
    assert all(0 <= sample_jitter(ba, 1.0, rng) <= 40 for _ in range(1000))
    rfc = make_mechanism("rfc5148", 250)
    assert all(0 <= sample_jitter(rfc, 0.5, rng) <= 250 for _ in range(1000))


@pytest.mark.parametrize(
    "name,kwargs", [("rfc5148", {}), ("window", {"alpha": 0.3}), ("adaptive", {}), ("bounded-adaptive", {"c": 40})]
)
def test_sampling_soundness(name, kwargs):
    rng = np.random.default_rng(1)
    mech = make_mechanism(name, 250, **kwargs)
    m = 0.63
    iv = jitter_interval(mech, m)
    draws = np.array([sample_jitter(mech, m, rng) for _ in range(100_000)])
    assert np.all((draws >= iv.lower) & (draws <= iv.upper))
    sigma = iv.width / math.sqrt(12) / math.sqrt(draws.size)
    assert abs(draws.mean() - 0.5 * (iv.lower + iv.upper)) <= 3 * sigma


def test_equal_metrics_give_half():
    for mech in (make_mechanism("adaptive", 100), make_mechanism("bounded-adaptive", 100, c=30)):
        metrics = [0.9, 0.4, 0.7]
        inst = InversionInstance(route_delay_model(mech, metrics), route_delay_model(mech, metrics[::-1]))
        assert inversion_probability_closed_form(inst).probability == pytest.approx(0.5, abs=1e-9)
