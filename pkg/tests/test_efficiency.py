import numpy as np
import pandas as pd
import pytest

from tvamh.efficiency import (
    CiBands,
    EfficiencyPath,
    bootstrap_bands,
    classify,
    efficiency_degree,
    summarize_window,
    zeta_from_coefficients,
)
from tvamh.errors import InsufficientDataError
from tvamh.synthetic import DgpKind, DgpSpec, simulate
from tvamh.timeseries import ReturnSeries
from tvamh.tvar import TvarConfig, fit_tvar
from tvamh.validation import flag_rate, null_flag_rate

CFG = TvarConfig.fixed(1, 100.0)


def _path(zeta, start="2021-01-01"):
    zeta = np.asarray(zeta, dtype=float)
    dates = pd.date_range(start, periods=len(zeta), freq="D")
    return EfficiencyPath("X", dates, zeta, np.zeros(len(zeta), dtype=bool))


def test_zeta_values():
    coef = np.array([[0.0, 0.5], [0.3, -0.5], [0.0, 0.0], [0.0, 0.4]])
    zeta, capped = zeta_from_coefficients(coef)
    np.testing.assert_allclose(zeta, [1.0, 1.0 / 3.0, 0.0, 0.4 / 0.6])
    assert not capped.any()


def test_zeta_sums_lags_and_ignores_intercept():
    zeta, _ = zeta_from_coefficients(np.array([[5.0, 0.25, 0.25], [0.0, 0.3, -0.3]]))
    np.testing.assert_allclose(zeta, [1.0, 0.0])


def test_unit_root_is_capped():
    zeta, capped = zeta_from_coefficients(np.array([[0.0, 0.6, 0.4], [0.0, 0.1, 0.0]]), 1e6)
    assert capped.tolist() == [True, False]
    assert zeta[0] == 1e6


def test_white_noise_efficiency_is_near_zero():
    rng = np.random.default_rng(21)
    returns = ReturnSeries.from_values(rng.normal(0.0, 0.01, 1000))
    path = efficiency_degree(fit_tvar(returns, CFG, with_covariance=False))
    assert (path.zeta >= 0).all()
    assert path.zeta.mean() < 0.1


def test_bootstrap_is_reproducible(ar1_returns):
    first = bootstrap_bands(ar1_returns, CFG, n_boot=100, level=0.9, seed=5)
    second = bootstrap_bands(ar1_returns, CFG, n_boot=100, level=0.9, seed=5)
    other = bootstrap_bands(ar1_returns, CFG, n_boot=100, level=0.9, seed=6)
    np.testing.assert_array_equal(first.upper, second.upper)
    np.testing.assert_array_equal(first.lower, second.lower)
    assert not np.array_equal(first.upper, other.upper)
    assert (first.lower <= first.upper).all()
    assert first.n_failed == 0
    assert list(first.dates) == list(ar1_returns.dates[1:])


@pytest.mark.slow
def test_bootstrap_does_not_depend_on_workers(ar1_returns):
    serial = bootstrap_bands(ar1_returns, CFG, n_boot=100, seed=1, n_jobs=1)
    parallel = bootstrap_bands(ar1_returns, CFG, n_boot=100, seed=1, n_jobs=2)
    np.testing.assert_array_equal(serial.upper, parallel.upper)


@pytest.mark.parametrize(
    "kwargs",
    [{"n_boot": 99}, {"level": 1.0}, {"level": 0.0}, {"seed": -1}],
)
def test_bootstrap_arguments_are_checked(ar1_returns, kwargs):
    with pytest.raises(ValueError):
        bootstrap_bands(ar1_returns, CFG, **kwargs)


def test_classify_flags_exceedances():
    path = _path([0.1, 0.5, 0.9, 0.2])
    bands = CiBands(path.dates, 0.99, np.zeros(4), np.full(4, 0.4), n_boot=100, seed=0)
    verdict = classify(path, bands)
    assert verdict.inefficient_flags.tolist() == [False, True, True, False]
    assert verdict.flagged_fraction == 0.5
    assert verdict.summary.mean == pytest.approx(0.425)
    assert verdict.summary.n_periods == 4


def test_classify_requires_aligned_bands():
    path = _path([0.1, 0.2])
    bands = CiBands(
        pd.date_range("2022-01-01", periods=2),
        0.99,
        np.zeros(2),
        np.ones(2),
        n_boot=100,
        seed=0,
    )
    with pytest.raises(ValueError, match="not aligned"):
        classify(path, bands)


def test_summarize_window_is_inclusive():
    path = _path([1.0, 2.0, 3.0, 4.0])
    summary = summarize_window(path, "2021-01-02", "2021-01-03")
    assert summary.n_periods == 2
    assert summary.mean == 2.5
    assert summary.sd == pytest.approx(np.std([2.0, 3.0], ddof=1))
    assert (summary.start, summary.end) == ("2021-01-02", "2021-01-03")
    assert summarize_window(path, end="2021-01-01").sd == 0.0


def test_summarize_empty_window():
    with pytest.raises(InsufficientDataError):
        summarize_window(_path([1.0, 2.0]), start="2030-01-01")


@pytest.mark.slow
@pytest.mark.parametrize("lam", [None, 100.0], ids=["feasible", "fixed"])
def test_null_flag_rate_is_small(lam):
    rate = null_flag_rate(n_obs=500, lam=lam, n_boot=500, seeds=list(range(20)), n_jobs=-1)
    assert rate < 0.05


@pytest.mark.slow
@pytest.mark.parametrize("lam", [None, 1000.0], ids=["feasible", "fixed"])
def test_strong_autocorrelation_is_flagged_across_seeds(lam):
    assert flag_rate(0.8, n_obs=500, lam=lam, n_boot=500, seeds=[12, 13, 14], n_jobs=-1) > 0.8


@pytest.mark.slow
@pytest.mark.parametrize(
    "cfg",
    [TvarConfig(q=1), TvarConfig.fixed(1, 1000.0)],
    ids=["feasible", "fixed"],
)
def test_step_in_autocorrelation_is_flagged(cfg):
    path = np.zeros((600, 2))
    path[300:, 1] = 0.6
    simulation = simulate(DgpSpec(DgpKind.DETERMINISTIC_PATH, q=1, n_obs=600, path=path, seed=7))
    efficiency = efficiency_degree(fit_tvar(simulation.returns, cfg, with_covariance=False))
    bands = bootstrap_bands(simulation.returns, cfg, n_boot=200, seed=7, n_jobs=-1)
    flags = classify(efficiency, bands).inefficient_flags
    assert flags[450:].mean() > 0.5
    assert flags[:150].mean() < 0.1


def test_zeta_increases_with_coefficient_sum():
    sums = np.linspace(0.0, 0.99, 100)
    zeta, _ = zeta_from_coefficients(np.column_stack([np.zeros(100), sums]))
    assert zeta[0] == 0.0
    assert (np.diff(zeta) > 0).all()


def test_bands_nest_across_levels(ar1_returns):
    wide = bootstrap_bands(ar1_returns, CFG, n_boot=100, level=0.99, seed=2)
    narrow = bootstrap_bands(ar1_returns, CFG, n_boot=100, level=0.9, seed=2)
    assert (wide.upper >= narrow.upper).all()
    assert (wide.lower <= narrow.lower).all()
    assert (wide.lower >= 0).all()


def test_zero_zeta_is_never_flagged():
    path = _path(np.zeros(5))
    bands = CiBands(path.dates, 0.99, np.zeros(5), np.full(5, 0.1), n_boot=100, seed=0)
    assert not classify(path, bands).inefficient_flags.any()


@pytest.mark.slow
def test_null_bands_lie_above_zero():
    rng = np.random.default_rng(30)
    returns = ReturnSeries.from_values(rng.normal(size=300))
    bands = bootstrap_bands(returns, CFG, n_boot=500, seed=30)
    assert (bands.upper > 0).all()
