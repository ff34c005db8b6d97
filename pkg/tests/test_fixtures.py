"""End-to-end runs on the CoinMarketCap fixtures, skipped when they are absent."""
from pathlib import Path

import numpy as np
import pytest

from tvamh.efficiency import bootstrap_bands, classify, efficiency_degree, summarize_window
from tvamh.timeseries import descriptive_stats, load_prices, log_returns
from tvamh.tvar import TvarConfig, fit_tvar
from tvamh.unitroot import ModelFamily, adf_test, bic_lag_select

DATA = Path(__file__).resolve().parents[1] / "data"

# mean, sd, min, max, n, ADF statistic, ADF lag, AR order, mean zeta, sd zeta
REFERENCE = {
    "BTC": (0.0018, 0.0431, -0.2662, 0.3575, 2346, -34.5442, 1, 6, 0.20, 0.18),
    "ETH": (0.0028, 0.0731, -1.3021, 0.4123, 1515, -20.2283, 2, 6, 0.30, 0.32),
}


def _returns(asset):
    path = DATA / f"{asset.lower()}.csv"
    if not path.is_file():
        pytest.skip(f"{path} not available (see data/README.md)")
    return log_returns(load_prices(path, asset_id=asset))


@pytest.mark.parametrize("asset", sorted(REFERENCE))
def test_descriptive_statistics(asset):
    mean, sd, low, high, n_obs, *_ = REFERENCE[asset]
    stats = descriptive_stats(_returns(asset))
    assert stats.n_obs == n_obs
    measured = [stats.mean, stats.sd, stats.min, stats.max]
    np.testing.assert_allclose(measured, [mean, sd, low, high], atol=5e-5)


@pytest.mark.parametrize("asset", sorted(REFERENCE))
def test_unit_root_rejected(asset):
    statistic, lag = REFERENCE[asset][5:7]
    result = adf_test(_returns(asset))
    assert result.reject_unit_root_1pct
    assert result.statistic == pytest.approx(statistic, abs=0.5)
    assert result.selected_lag == lag


@pytest.mark.slow
def test_efficiency_summaries():
    summaries = {}
    for asset, reference in REFERENCE.items():
        returns = _returns(asset)
        cfg = TvarConfig(q=reference[7])
        fit = fit_tvar(returns, cfg, with_covariance=False)
        assert fit.converged
        path = efficiency_degree(fit)
        bands = bootstrap_bands(returns, cfg, n_boot=500, seed=0, n_jobs=-1)
        verdict = classify(path, bands)
        assert bands.n_boot == 500
        summaries[asset] = summarize_window(path)
        assert verdict.summary.mean == pytest.approx(summaries[asset].mean)
        assert summaries[asset].mean == pytest.approx(reference[8], abs=0.05)
        assert summaries[asset].sd == pytest.approx(reference[9], abs=0.07)
    assert summaries["ETH"].mean > summaries["BTC"].mean
    assert summaries["ETH"].sd > summaries["BTC"].sd


def test_bic_chooses_ar6_for_bitcoin():
    assert bic_lag_select(_returns("BTC"), max_lag=12, model_family=ModelFamily.AR_LEVEL) == 6
