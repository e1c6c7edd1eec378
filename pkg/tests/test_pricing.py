import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loadcast.pricing import PricingPolicy, generation_cost_gap, price_schedule, trailing_mean

loads = arrays(float, st.integers(1, 72), elements=st.floats(0.1, 50.0))


def test_flat_forecast_is_flat_price():
    s = price_schedule(np.full(48, 3.0), PricingPolicy())
    assert np.all(s.prices == 0.10) and not s.peak.any()


@given(loads)
def test_zero_sensitivity(load):
    s = price_schedule(load, PricingPolicy(sensitivity=0.0))
    assert np.all(s.prices == 0.10)


def test_worked_spike():
    load = np.array([100.0] * 23 + [200.0])
    s = price_schedule(load, PricingPolicy(base_price=0.10, sensitivity=1.0, cap_price=0.30, reference_window=24))
    ref = (23 * 100 + 200) / 24
    assert s.reference[-1] == pytest.approx(ref, rel=1e-12)
    assert s.prices[-1] == pytest.approx(0.10 * (1 + (200 - ref) / ref), rel=1e-12)
    assert s.prices[-1] == pytest.approx(0.192, abs=1e-3)
    assert s.peak[-1] and not s.peak[:-1].any()


def test_trailing_mean_short_prefix():
    assert trailing_mean(np.array([1.0, 3.0, 5.0, 7.0]), 2).tolist() == [1.0, 2.0, 4.0, 6.0]


@given(loads, st.floats(0.0, 5.0))
def test_prices_within_bounds(load, gamma):
    p = PricingPolicy(sensitivity=gamma)
    s = price_schedule(load, p)
    assert np.all((s.prices >= p.floor_price) & (s.prices <= p.cap_price))


@settings(max_examples=100)
@given(loads, st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_monotone_in_sensitivity(load, g1, g2):
    lo, hi = sorted((g1, g2))
    a = price_schedule(load, PricingPolicy(sensitivity=lo))
    b = price_schedule(load, PricingPolicy(sensitivity=hi))
    above = load > a.reference
    assert np.all(b.prices[above] >= a.prices[above] - 1e-15)


@given(loads, st.floats(0.01, 100.0))
def test_scale_invariance(load, k):
    a = price_schedule(load, PricingPolicy())
    b = price_schedule(load * k, PricingPolicy())
    assert np.allclose(a.prices, b.prices, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("bad", [[1.0, 0.0], [1.0, -2.0], [np.nan], []])
def test_bad_forecast(bad):
    with pytest.raises(ValueError):
        price_schedule(bad, PricingPolicy())


@pytest.mark.parametrize(
    "kw", [{"floor_price": 0.2}, {"cap_price": 0.05}, {"sensitivity": -1}, {"reference_window": 0}]
)
def test_policy_validation(kw):
    with pytest.raises(ValueError):
        PricingPolicy(**kw)


def test_policy_json(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"sensitivity": 2.0, "reference_window": 12}))
    pol = PricingPolicy.from_json(p)
    assert pol.sensitivity == 2.0 and pol.reference_window == 12
    p.write_text(json.dumps({"gamma": 2.0}))
    with pytest.raises(ValueError, match="unknown"):
        PricingPolicy.from_json(p)


def test_schedule_csv():
    ts = np.datetime64("2015-01-01T00", "h") + np.arange(3)
    s = price_schedule([1.0, 1.0, 2.0], PricingPolicy(), ts)
    lines = s.to_csv().splitlines()
    assert lines[0] == "timestamp,price,peak"
    assert lines[3].startswith("2015-01-01T02:00:00,") and lines[3].endswith(",1")


def test_cost_gap_examples():
    y = np.full(10, 50.0)
    assert generation_cost_gap(y, y, 0.05, 0.2) == 0.0
    assert generation_cost_gap(y, y + 10, 0.05, 0.2) == pytest.approx(5.0, abs=1e-12)


@given(loads, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cost_gap_brute_force(y, over, under):
    yhat = y * (1 + 0.3 * np.sin(np.arange(len(y))))
    expected = sum(over * max(0.0, b - a) + under * max(0.0, a - b) for a, b in zip(y, yhat))
    got = generation_cost_gap(y, yhat, over, under)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert got >= 0


@given(loads, st.integers(0, 71), st.floats(0.01, 5.0))
def test_cost_gap_zero_iff_exact(y, i, delta):
    assert generation_cost_gap(y, y, 1.0, 1.0) == 0.0
    yhat = y.copy()
    yhat[i % len(y)] += delta
    assert generation_cost_gap(y, yhat, 1.0, 1.0) > 0


def test_cost_gap_errors():
    with pytest.raises(ValueError, match="length"):
        generation_cost_gap([1.0, 2.0], [1.0], 1, 1)
    with pytest.raises(ValueError, match="costs"):
        generation_cost_gap([1.0], [1.0], -1, 1)
