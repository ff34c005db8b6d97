import numpy as np
import pandas as pd
import pytest

from tvamh.errors import IngestionError, InsufficientDataError
from tvamh.timeseries import (
    FormatConfig,
    PriceSeries,
    ReturnSeries,
    descriptive_stats,
    load_prices,
    log_returns,
    write_prices,
)


def test_load_sorts_ascending_and_names_asset_from_file(write_csv):
    path = write_csv("date,close\n2021-01-03,3\n2021-01-01,1\n2021-01-02,2\n", "btc.csv")
    series = load_prices(path)
    assert series.asset_id == "BTC"
    assert list(series.dates.strftime("%Y-%m-%d")) == ["2021-01-01", "2021-01-02", "2021-01-03"]
    np.testing.assert_array_equal(series.prices, [1.0, 2.0, 3.0])


def test_load_strips_thousands_separators(write_csv):
    path = write_csv('date,close\n2021-01-01,"1,234.5"\n2021-01-02,"1,300"\n')
    np.testing.assert_array_equal(load_prices(path).prices, [1234.5, 1300.0])


def test_load_with_custom_columns(write_csv):
    path = write_csv("Date,Close*\n01/02/2021,10\n02/02/2021,11\n")
    fmt = FormatConfig(date_column="Date", price_column="Close*", date_format="%d/%m/%Y")
    series = load_prices(path, fmt, asset_id="ETH")
    assert series.asset_id == "ETH"
    assert series.dates[1].month == 2


def test_missing_column_is_rejected(write_csv):
    path = write_csv("date,open\n2021-01-01,1\n")
    with pytest.raises(IngestionError, match="missing column"):
        load_prices(path)


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(IngestionError, match="file not found"):
        load_prices(tmp_path / "nope.csv")


def test_bad_price_reports_row(write_csv):
    path = write_csv("date,close\n2021-01-01,1\n2021-01-02,abc\n")
    with pytest.raises(IngestionError, match="row 3: unparseable price") as info:
        load_prices(path)
    assert info.value.row == 3


def test_non_positive_price_is_rejected(write_csv):
    path = write_csv("date,close\n2021-01-01,1\n2021-01-02,0\n")
    with pytest.raises(IngestionError, match="non-positive"):
        load_prices(path)


def test_duplicate_dates_are_rejected(write_csv):
    path = write_csv("date,close\n2021-01-01,1\n2021-01-02,2\n2021-01-02,3\n")
    with pytest.raises(IngestionError, match="duplicate date 2021-01-02"):
        load_prices(path)


def test_calendar_gap_warns(write_csv):
    path = write_csv("date,close\n2021-01-01,1\n2021-01-05,2\n")
    with pytest.warns(UserWarning, match="calendar gap"):
        series = load_prices(path)
    assert len(series) == 2


def test_log_returns_values_and_alignment():
    prices = PriceSeries("X", ["2021-01-01", "2021-01-02", "2021-01-03"], [100.0, 110.0, 99.0])
    returns = log_returns(prices)
    np.testing.assert_allclose(returns.values, [np.log(1.1), np.log(0.9)])
    assert list(returns.dates) == list(prices.dates[1:])


def test_log_returns_need_two_prices():
    with pytest.raises(InsufficientDataError):
        log_returns(PriceSeries("X", ["2021-01-01"], [1.0]))


def test_price_series_rejects_unsorted_dates():
    with pytest.raises(ValueError, match="strictly increasing"):
        PriceSeries("X", ["2021-01-02", "2021-01-01"], [1.0, 2.0])


def test_descriptive_stats():
    stats = descriptive_stats(ReturnSeries.from_values([0.01, -0.02, 0.04]))
    assert stats.n_obs == 3
    assert stats.mean == pytest.approx(0.01)
    assert stats.sd == pytest.approx(np.std([0.01, -0.02, 0.04], ddof=1))
    assert (stats.min, stats.max) == (-0.02, 0.04)


def test_descriptive_stats_single_value():
    stats = descriptive_stats(ReturnSeries.from_values([0.3]))
    assert stats.sd == 0.0
    assert stats.min == stats.mean == stats.max == 0.3


def test_written_prices_load_back_exactly(tmp_path):
    prices = PriceSeries("X", ["2021-01-01", "2021-01-02"], [0.1 + 0.2, 12345.678901234567])
    write_prices(prices, tmp_path / "x.csv")
    loaded = load_prices(tmp_path / "x.csv")
    np.testing.assert_array_equal(loaded.prices, prices.prices)


def _prices(values, start="2021-01-01"):
    dates = pd.date_range(start, periods=len(values), freq="D")
    return PriceSeries("BTC", dates, values)


def _random_prices(seed, n=300):
    rng = np.random.default_rng(seed)
    return 100.0 * np.exp(np.cumsum(rng.normal(0, 0.03, n)))


def test_returns_ignore_price_scale():
    prices = _random_prices(0)
    base = log_returns(_prices(prices)).values
    np.testing.assert_allclose(log_returns(_prices(prices * 1000.0)).values, base, atol=1e-15)
    np.testing.assert_array_equal(log_returns(_prices(prices * 1024.0)).values, base)


def test_reversed_prices_negate_reversed_returns():
    prices = _random_prices(1)
    forward = log_returns(_prices(prices)).values
    backward = log_returns(_prices(prices[::-1])).values
    np.testing.assert_allclose(backward, -forward[::-1], atol=1e-15)


def test_stats_ignore_order():
    values = np.random.default_rng(2).standard_t(3, 500) * 0.04
    rng = np.random.default_rng(3)
    original = descriptive_stats(ReturnSeries.from_values(values))
    for _ in range(5):
        shuffled = descriptive_stats(ReturnSeries.from_values(rng.permutation(values)))
        assert shuffled.mean == pytest.approx(original.mean, rel=1e-12, abs=1e-17)
        assert shuffled.sd == pytest.approx(original.sd, rel=1e-12)
        assert (shuffled.min, shuffled.max, shuffled.n_obs) == (
            original.min,
            original.max,
            original.n_obs,
        )
