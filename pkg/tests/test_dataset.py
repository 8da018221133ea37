import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from vfvol.dataset import (
    DataError,
    RawDailySeries,
    SplitSpec,
    VaryingFrequencyDataset,
    build_dataset,
    concat,
    load_any,
    read_daily_csv,
    read_dataset_csv,
    split,
    write_daily_csv,
    write_dataset_csv,
)


def _daily(close, volume=None, dates=None):
    close = np.asarray(close, dtype=float)
    if volume is None:
        volume = np.ones_like(close)
    return RawDailySeries(close, np.asarray(volume, dtype=float), dates)


def test_constant_close_gives_zero_returns():
    ds = build_dataset(_daily(np.full(25, 10.0)))
    assert ds.n == 4
    assert_array_equal(ds.y, 0.0)


def test_constant_volume_gives_zero_v():
    rng = np.random.default_rng(0)
    ds = build_dataset(_daily(100 + rng.random(30), np.full(30, 7.0)))
    assert_array_equal(ds.v, 0.0)


def test_period_end_closes_arithmetic():
    close = np.r_[np.full(5, 100.0), np.full(5, 105.0), np.full(5, 110.25)]
    ds = build_dataset(_daily(close))
    assert_allclose(ds.y, [math.log(1.05), math.log(1.05)], rtol=1e-14)
    assert_allclose(ds.y, [0.04879, 0.04879], atol=1e-5)


def test_x_lag_rows_are_previous_blocks():
    close = np.arange(1.0, 21.0)
    vol = np.arange(1.0, 21.0)
    ds = build_dataset(_daily(close, vol))
    assert ds.n == 3
    assert_array_equal(ds.x_lag, close[:15].reshape(3, 5))
    blocks = vol.reshape(4, 5).sum(axis=1)
    assert_allclose(ds.v, np.log(blocks[1:] / blocks[:-1]))


def test_trailing_partial_period_dropped():
    ds = build_dataset(_daily(np.linspace(10, 12, 23)))
    assert ds.n == 3


def test_nonpositive_price_rejected_with_index():
    close = np.full(20, 5.0)
    close[7] = 0.0
    with pytest.raises(DataError, match="7"):
        build_dataset(_daily(close))


def test_zero_period_volume_rejected():
    vol = np.ones(20)
    vol[5:10] = 0.0
    with pytest.raises(DataError, match="volume"):
        build_dataset(_daily(np.full(20, 5.0), vol))


def test_too_few_periods_rejected():
    with pytest.raises(DataError):
        build_dataset(_daily(np.full(10, 5.0)))


@pytest.mark.parametrize("n, train, horizon, ok", [(103, 99, 4, True), (10, 9, 1, True),
                                                   (10, 9, 4, False)])
def test_split_lengths(n, train, horizon, ok):
    ds = VaryingFrequencyDataset(np.zeros(n), np.zeros(n), np.ones((n, 5)))
    if not ok:
        with pytest.raises(ValueError):
            split(ds, SplitSpec(train, horizon))
        return
    a, b = split(ds, SplitSpec(train, horizon))
    assert (a.n, b.n) == (train, horizon)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 40), data=st.data())
def test_split_concat_round_trip(n, data):
    train = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(n)
    ds = VaryingFrequencyDataset(rng.normal(size=n), rng.normal(size=n), rng.random((n, 5)) + 1)
    a, b = split(ds, SplitSpec(train, n - train))
    back = concat([a, b])
    assert_array_equal(back.y, ds.y)
    assert_array_equal(back.v, ds.v)
    assert_array_equal(back.x_lag, ds.x_lag)


@settings(max_examples=30, deadline=None)
@given(periods=st.integers(3, 30), m=st.integers(2, 7))
def test_length_is_periods_minus_one(periods, m):
    rng = np.random.default_rng(periods * 10 + m)
    close = 50 * np.exp(np.cumsum(rng.normal(0, 0.01, periods * m)))
    ds = build_dataset(_daily(close, rng.random(periods * m) + 0.1), m)
    assert ds.n == periods - 1
    assert ds.x_lag.shape == (periods - 1, m)


def test_dataset_arrays_are_read_only():
    ds = build_dataset(_daily(np.linspace(1, 2, 20)))
    with pytest.raises(ValueError):
        ds.y[0] = 1.0


def test_daily_csv_round_trip(tmp_path):
    dates = pd.bdate_range("2016-01-04", periods=20).to_numpy(dtype="datetime64[D]")
    rng = np.random.default_rng(3)
    daily = _daily(100 + rng.random(20), rng.random(20) * 1e6, dates)
    path = tmp_path / "d.csv"
    write_daily_csv(daily, path)
    back = read_daily_csv(path)
    assert_array_equal(back.close, daily.close)
    assert_array_equal(back.volume, daily.volume)
    assert_array_equal(back.dates, dates)


def test_daily_csv_bad_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("Date,Close,Vol\n2016-01-04,1,1\n")
    with pytest.raises(DataError, match="header"):
        read_daily_csv(path)


def test_dataset_csv_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(4)
    ds = build_dataset(_daily(100 * np.exp(np.cumsum(rng.normal(0, 0.01, 40))), rng.random(40) + 1))
    path = tmp_path / "ds.csv"
    write_dataset_csv(ds, path)
    assert path.read_text().splitlines()[0] == "t,y,v,x1,x2,x3,x4,x5"
    back = read_dataset_csv(path)
    assert_array_equal(back.y, ds.y)
    assert_array_equal(back.v, ds.v)
    assert_array_equal(back.x_lag, ds.x_lag)
    assert_array_equal(load_any(path).y, ds.y)


def test_week_grouping_pads_short_weeks():
    # three weeks from 2016-01-11 with the second week's Monday missing
    dates = pd.bdate_range("2016-01-11", periods=15).to_numpy(dtype="datetime64[D]")
    dates = np.delete(dates, 5)
    close = np.arange(1.0, 15.0)
    ds = build_dataset(_daily(close, np.ones(14), dates), grouping="week")
    assert ds.n == 2
    assert ds.metadata["fill_counts"] == [1, 0]
    # the short week is padded at its end with its own last close
    assert_array_equal(ds.x_lag[1], [6.0, 7.0, 8.0, 9.0, 9.0])
