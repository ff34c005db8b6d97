import numpy as np
import pandas as pd
import pytest

from tvamh.synthetic import DgpSpec, simulate
from tvamh.timeseries import PriceSeries, ReturnSeries, write_prices


@pytest.fixture
def write_csv(tmp_path):
    """Write raw CSV text under tmp_path and return the path."""

    def _write(text, name="asset.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def ar1_returns() -> ReturnSeries:
    return simulate(DgpSpec.constant_ar([0.4], 400, seed=11)).returns


@pytest.fixture
def price_file(tmp_path):
    """Write a price CSV whose log returns are ``returns``."""

    def _write(name, returns, start="2020-01-01", first_price=100.0):
        path = tmp_path / name
        prices = first_price * np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
        dates = pd.date_range(start, periods=len(prices), freq="D")
        write_prices(PriceSeries(path.stem.upper(), dates, prices), path)
        return path

    return _write
