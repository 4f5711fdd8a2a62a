import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from monoflow.series import PiecewiseLinear, merged_breakpoints, negative_intervals


def test_constant_extrapolation():
    f = PiecewiseLinear([[0.0, 1.0], [1.0, 3.0]])
    assert f(-5.0) == 1.0
    assert f(5.0) == 3.0
    assert f(0.5) == pytest.approx(2.0)


def test_rejects_bad_tables():
    with pytest.raises(ValueError):
        PiecewiseLinear([])
    with pytest.raises(ValueError):
        PiecewiseLinear([[0.0, 1.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        PiecewiseLinear([[0.0, float("nan")]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.floats(-0.5, 0.5), st.floats(0.6, 2.5))
def test_integral_matches_quadrature(values, a, b):
    s = np.linspace(0.0, 2.0, len(values))
    f = PiecewiseLinear(np.column_stack([s, values]))
    ref, _ = quad(f, a, b, points=list(s[(s > a) & (s < b)]) or None, limit=100, epsabs=1e-13)
    assert f.integral(a, b) == pytest.approx(ref, abs=1e-10)
    assert f.integral(b, a) == pytest.approx(-ref, abs=1e-10)


def test_mean_of_degenerate_interval_is_point_value():
    f = PiecewiseLinear([[0.0, 0.0], [1.0, 2.0]])
    assert f.mean(0.25, 0.25) == pytest.approx(0.5)
    assert f.mean(0.0, 1.0) == pytest.approx(1.0)


def test_merged_breakpoints_and_negative_intervals():
    f = PiecewiseLinear([[0.0, 1.0], [1.0, -1.0], [2.0, 1.0]])
    g = PiecewiseLinear.constant(0.0)
    grid = merged_breakpoints([f, g], 0.0, 2.0)
    assert list(grid) == [0.0, 1.0, 2.0]
    iv = negative_intervals(f(grid) - g(grid), grid)
    assert len(iv) == 1
    assert iv[0][0] == pytest.approx(0.5)
    assert iv[0][1] == pytest.approx(1.5)


def test_negative_intervals_empty_when_ordered():
    grid = np.array([0.0, 1.0, 2.0])
    assert negative_intervals(np.array([0.0, 1.0, 0.0]), grid) == []
