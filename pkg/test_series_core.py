"""
Tests for the time-series value type, differencing, scaling, windowing and splitting.
"""

import numpy as np
import pytest

from errors import BoundsError, DegenerateInputError, StateCorruptionError, ZeroRangeError
from series_core import (
    DifferenceState,
    TimeSeries,
    apply_scaler,
    difference,
    fit_scaler,
    invert_scaler,
    make_windows,
    shift_period,
    split_train_test,
    undifference,
)


def test_time_series_rejects_non_finite_values():
    with pytest.raises(DegenerateInputError):
        TimeSeries([1.0, np.nan, 2.0])
    with pytest.raises(DegenerateInputError):
        TimeSeries([1.0, np.inf])


def test_time_series_calendar():
    series = TimeSeries(np.arange(14.0), (2021, 11))
    assert series.end_period == (2022, 12)
    assert series.period_labels()[:3] == ['2021-11', '2021-12', '2022-01']
    assert shift_period((2010, 1), -1) == (2009, 12)
    with pytest.raises(BoundsError):
        TimeSeries([1.0], (2010, 13))


def test_time_series_values_are_read_only():
    series = TimeSeries([1.0, 2.0])
    with pytest.raises(ValueError):
        series.values[0] = 5.0


def test_difference_first_order():
    differenced, state = difference(TimeSeries([1, 2, 4, 7], (2010, 1)), 1)
    assert list(differenced.values) == [1, 2, 3]
    assert state.seeds == (1.0,)
    assert differenced.start_period == (2010, 2)


def test_difference_second_order():
    differenced, state = difference(TimeSeries([1, 2, 4, 7]), 2)
    assert list(differenced.values) == [1, 1]
    assert state.seeds == (1.0, 1.0)


def test_difference_zero_order_is_identity():
    series = TimeSeries([3.0, 1.0, 2.0])
    differenced, state = difference(series, 0)
    np.testing.assert_array_equal(differenced.values, series.values)
    assert state.seeds == ()


def test_difference_errors():
    with pytest.raises(DegenerateInputError, match="at least 3"):
        difference(TimeSeries([1.0, 2.0]), 2)
    with pytest.raises(BoundsError):
        difference(TimeSeries([1.0, 2.0]), -1)


def test_undifference_examples():
    restored = undifference(TimeSeries([1, 2, 3]), DifferenceState(1, (1,)))
    assert list(restored.values) == [1, 2, 4, 7]
    unchanged = undifference(TimeSeries([5.0, 6.0]), DifferenceState(0, ()))
    assert list(unchanged.values) == [5.0, 6.0]


def test_undifference_rejects_seed_mismatch():
    with pytest.raises(StateCorruptionError):
        undifference(TimeSeries([1.0, 2.0]), DifferenceState(2, (1.0,)))


def test_difference_round_trip_property(rng):
    for _ in range(1000):
        d = int(rng.integers(0, 4))
        n = int(rng.integers(d + 1, 80))
        series = TimeSeries(rng.normal(0.0, 10.0, n), (2000, int(rng.integers(1, 13))))
        differenced, state = difference(series, d)
        assert len(differenced) == n - d
        restored = undifference(differenced, state)
        np.testing.assert_allclose(restored.values, series.values, rtol=0, atol=1e-9)
        assert restored.start_period == series.start_period


def test_scaler_maps_endpoints():
    state = fit_scaler(TimeSeries([0.0, 5.0, 10.0]))
    np.testing.assert_array_equal(apply_scaler([0.0, 5.0, 10.0], state), [0.0, 0.5, 1.0])


def test_scaler_rejects_constant_series():
    with pytest.raises(ZeroRangeError):
        fit_scaler(TimeSeries([7.0, 7.0, 7.0]))


def test_scaler_round_trip_property(rng):
    for _ in range(1000):
        values = rng.normal(rng.normal(0, 50), rng.uniform(0.1, 20), int(rng.integers(2, 50)))
        state = fit_scaler(values)
        scaled = apply_scaler(values, state)
        assert scaled.min() >= 0.0 and scaled.max() <= 1.0
        np.testing.assert_allclose(invert_scaler(scaled, state), values, rtol=1e-12, atol=1e-12)


def test_make_windows_example():
    windows = make_windows(TimeSeries([1, 2, 3, 4, 5]), 2)
    np.testing.assert_array_equal(windows.inputs, [[1, 2], [2, 3], [3, 4]])
    np.testing.assert_array_equal(windows.targets, [3, 4, 5])


def test_make_windows_counts(rng):
    assert len(make_windows(np.arange(144.0), 12)) == 132
    assert len(make_windows(np.arange(10.0), 9)) == 1
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        look_back = int(rng.integers(1, n))
        values = rng.normal(size=n)
        windows = make_windows(values, look_back)
        assert len(windows) == n - look_back
        i = int(rng.integers(0, n - look_back))
        np.testing.assert_array_equal(windows.inputs[i], values[i:i + look_back])
        assert windows.targets[i] == values[i + look_back]


def test_make_windows_errors():
    with pytest.raises(DegenerateInputError):
        make_windows(np.arange(5.0), 5)
    with pytest.raises(BoundsError):
        make_windows(np.arange(5.0), 0)


def test_split_train_test_monthly_convention():
    series = TimeSeries(np.arange(156.0), (2010, 1))
    train, test = split_train_test(series, 12)
    assert len(train) == 144 and train.end_period == (2021, 12)
    assert len(test) == 12 and test.start_period == (2022, 1)
    np.testing.assert_array_equal(train.concat(test).values, series.values)


def test_split_train_test_bounds():
    series = TimeSeries(np.arange(5.0))
    train, test = split_train_test(series, 4)
    assert len(train) == 1 and len(test) == 4
    for bad in (0, 5, -1):
        with pytest.raises(BoundsError):
            split_train_test(series, bad)
