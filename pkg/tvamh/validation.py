"""Oracle and Monte-Carlo checks of the estimator on synthetic data."""
import logging
import time
from typing import Callable, List, Optional

import attr
import numpy as np

from tvamh.efficiency import bootstrap_bands, classify, efficiency_degree
from tvamh.synthetic import DgpSpec, kalman_smoother_oracle, path_rmse, simulate
from tvamh.tvar import (
    TvarConfig,
    build_stacked_system,
    fit_tvar,
    regressor_matrix,
    solve_stacked_system,
)

logger = logging.getLogger(__name__)

ORACLE_BURN = 5
DENSE_TOLERANCE = 1e-10
LARGE_LAMBDA = 1e8
LARGE_LAMBDA_TOLERANCE = 1e-4
RECOVERY_PHI = 0.5
RECOVERY_RMSE = 0.05
NULL_LEVEL = 0.99
NULL_FLAG_RATE = 0.05


@attr.frozen
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    seconds: float
    detail: str = ""


@attr.frozen
class ValidationReport:
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _ar_coefs(q: int) -> List[float]:
    return ([0.5, -0.3] + [0.0] * q)[:q]


def _timed(name: str, threshold: float, run: Callable[[], float], detail: str) -> CheckResult:
    started = time.perf_counter()
    measured = float(run())
    seconds = time.perf_counter() - started
    result = CheckResult(name, bool(measured < threshold), measured, threshold, seconds, detail)
    logger.info(
        "%s: measured %.3g (threshold %.3g) in %.2fs -> %s",
        name,
        measured,
        threshold,
        seconds,
        "pass" if result.passed else "FAIL",
    )
    return result


def oracle_difference(n_obs: int, q: int, lam: float, seed: int) -> float:
    """Max |GLS - Kalman smoother| with fixed variances, first periods excluded."""
    returns = simulate(DgpSpec.constant_ar(_ar_coefs(q), n_obs, seed=seed)).returns
    fit = fit_tvar(returns, TvarConfig.fixed(q, lam), with_covariance=False)
    oracle = kalman_smoother_oracle(returns, q, 1.0, np.full(q + 1, 1.0 / lam))
    return float(np.abs(fit.coef_paths - oracle)[ORACLE_BURN:].max())


def dense_difference(seed: int, n_periods: int = 8) -> float:
    rng = np.random.default_rng(seed)
    returns = simulate(DgpSpec.constant_ar([0.3], n_periods + 1, seed=seed)).returns
    system = build_stacked_system(returns, TvarConfig.fixed(1, rng.uniform(0.5, 5.0)))
    banded = solve_stacked_system(system)
    dense = solve_stacked_system(system, method="dense")
    return float(np.abs(banded - dense).max())


def large_lambda_difference(n_obs: int, q: int, seed: int) -> float:
    returns = simulate(DgpSpec.constant_ar(_ar_coefs(q), n_obs, seed=seed)).returns
    fit = fit_tvar(returns, TvarConfig.fixed(q, LARGE_LAMBDA), with_covariance=False)
    regressors = regressor_matrix(returns.values, q)
    constant, *_ = np.linalg.lstsq(regressors, returns.values[q:], rcond=None)
    return float(np.abs(fit.coef_paths - constant).max())


def recovery_rmse(n_obs: int, seeds: List[int]) -> float:
    """Mean slope-path RMSE under feasible GLS on AR(1) data with a constant coefficient."""
    errors = []
    for seed in seeds:
        simulation = simulate(DgpSpec.constant_ar([RECOVERY_PHI], n_obs, seed=seed))
        fit = fit_tvar(simulation.returns, TvarConfig(q=1), with_covariance=False)
        errors.append(path_rmse(fit.coef_paths, simulation.coef_paths, (1,))[0])
    return float(np.mean(errors))


def flag_rate(
    phi: float,
    n_obs: int,
    lam: Optional[float],
    n_boot: int,
    seeds: List[int],
    n_jobs: int = 1,
) -> float:
    """Average share of periods flagged inefficient on AR(1) returns.

    ``lam=None`` fits by feasible GLS.
    """
    cfg = TvarConfig(q=1) if lam is None else TvarConfig.fixed(1, lam)
    rates = []
    for seed in seeds:
        returns = simulate(DgpSpec.constant_ar([phi], n_obs, seed=seed)).returns
        path = efficiency_degree(fit_tvar(returns, cfg, with_covariance=False))
        bands = bootstrap_bands(returns, cfg, n_boot, NULL_LEVEL, seed=seed, n_jobs=n_jobs)
        rates.append(classify(path, bands).flagged_fraction)
    return float(np.mean(rates))


def null_flag_rate(
    n_obs: int,
    lam: Optional[float],
    n_boot: int,
    seeds: List[int],
    n_jobs: int = 1,
) -> float:
    """Average share of periods flagged inefficient on iid Gaussian returns."""
    return flag_rate(0.0, n_obs, lam, n_boot, seeds, n_jobs)


def run_battery(settings, n_jobs: int = 1) -> ValidationReport:
    """Run every check; ``settings`` is the ``validate`` group of the run config."""
    seeds = [settings.seed + offset for offset in range(settings.n_seeds)]
    checks = []
    for q in sorted({1, settings.q}):
        checks.append(
            _timed(
                f"kalman_equivalence_q{q}",
                settings.tolerance,
                lambda q=q: oracle_difference(settings.n_obs, q, settings.lam, settings.seed),
                f"T={settings.n_obs}, lambda={settings.lam:g}",
            ),
        )
    checks.append(
        _timed(
            "dense_equivalence",
            DENSE_TOLERANCE,
            lambda: max(dense_difference(seed) for seed in seeds),
            "T_eff=8, q=1",
        ),
    )
    checks.append(
        _timed(
            "large_lambda_limit",
            LARGE_LAMBDA_TOLERANCE,
            lambda: large_lambda_difference(settings.n_obs, settings.q, settings.seed),
            f"lambda={LARGE_LAMBDA:g}",
        ),
    )
    checks.append(
        _timed(
            "constant_recovery_rmse",
            RECOVERY_RMSE,
            lambda: recovery_rmse(settings.recovery_n_obs, seeds),
            f"AR(1) phi={RECOVERY_PHI}, T={settings.recovery_n_obs}, feasible GLS",
        ),
    )
    checks.append(
        _timed(
            "null_flag_rate",
            NULL_FLAG_RATE,
            lambda: null_flag_rate(settings.n_obs, settings.lam, settings.n_boot, seeds, n_jobs),
            f"iid Gaussian, level={NULL_LEVEL}, n_boot={settings.n_boot}",
        ),
    )
    return ValidationReport(checks)
