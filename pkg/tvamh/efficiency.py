"""Time-varying degree of market efficiency and its bootstrap bands under the null.

The degree ``zeta_t = |S_t / (1 - S_t)|`` with ``S_t`` the sum of the period-t AR
coefficients is the absolute cumulative impulse response of the local AR(q).
Bands are pointwise quantiles of zeta over fits to iid resamples of the
demeaned returns, i.e. under zero autocorrelation.
"""
import logging
import warnings
from datetime import date
from typing import Optional, Tuple, Union

import attr
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from tvamh.errors import (
    BootstrapError,
    InsufficientDataError,
    NonConvergenceWarning,
    NumericalError,
)
from tvamh.timeseries import ReturnSeries
from tvamh.tvar import TvarConfig, TvarFit, fit_tvar

logger = logging.getLogger(__name__)

DEFAULT_CEILING = 1e8
UNIT_ROOT_GAP = 1e-8
MAX_ATTEMPTS = 20

DateLike = Union[str, date, pd.Timestamp]


@attr.frozen(eq=False)
class EfficiencyPath:
    asset_id: str
    dates: pd.DatetimeIndex = attr.field(converter=pd.DatetimeIndex)
    zeta: np.ndarray
    capped_flags: np.ndarray


@attr.frozen(eq=False)
class CiBands:
    dates: pd.DatetimeIndex = attr.field(converter=pd.DatetimeIndex)
    level: float
    lower: np.ndarray
    upper: np.ndarray
    n_boot: int
    seed: int
    n_failed: int = 0
    n_nonconverged: int = 0


@attr.frozen
class ZetaSummary:
    mean: float
    sd: float
    n_periods: int
    start: Optional[str]
    end: Optional[str]


@attr.frozen(eq=False)
class EfficiencyVerdict:
    asset_id: str
    dates: pd.DatetimeIndex = attr.field(converter=pd.DatetimeIndex)
    inefficient_flags: np.ndarray
    summary: ZetaSummary
    flagged_fraction: float


def zeta_from_coefficients(
    coef_paths: np.ndarray,
    ceiling: float = DEFAULT_CEILING,
) -> Tuple[np.ndarray, np.ndarray]:
    """Efficiency degree per period and the near-unit-root flags; column 0 is the intercept."""
    lag_sum = coef_paths[:, 1:].sum(axis=1)
    gap = 1.0 - lag_sum
    capped = np.abs(gap) < UNIT_ROOT_GAP
    zeta = np.full(len(lag_sum), float(ceiling))
    zeta[~capped] = np.abs(lag_sum[~capped] / gap[~capped])
    return zeta, capped


def efficiency_degree(fit: TvarFit, ceiling: float = DEFAULT_CEILING) -> EfficiencyPath:
    zeta, capped = zeta_from_coefficients(fit.coef_paths, ceiling)
    if capped.any():
        logger.info(
            "%s: %d period(s) with coefficient sum within %g of one capped at %g",
            fit.asset_id,
            int(capped.sum()),
            UNIT_ROOT_GAP,
            ceiling,
        )
    return EfficiencyPath(fit.asset_id, fit.dates, zeta, capped)


def _replicate(
    returns: ReturnSeries,
    cfg: TvarConfig,
    seed: int,
    index: int,
    ceiling: float,
) -> Tuple[np.ndarray, int, bool]:
    """One bootstrap replication; failed fits are redrawn from a fresh substream."""
    mean = returns.values.mean()
    residuals = returns.values - mean
    failures = 0
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, index, attempt])
        draw = mean + rng.choice(residuals, size=len(residuals), replace=True)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NonConvergenceWarning)
                fit = fit_tvar(
                    ReturnSeries(returns.asset_id, returns.dates, draw),
                    cfg,
                    with_covariance=False,
                )
        except NumericalError as exc:
            failures += 1
            logger.debug("replication %d attempt %d failed: %s", index, attempt, exc)
            continue
        zeta, _ = zeta_from_coefficients(fit.coef_paths, ceiling)
        return zeta, failures, fit.converged
    raise BootstrapError(f"replication {index} failed {MAX_ATTEMPTS} consecutive fits")


def bootstrap_bands(
    returns: ReturnSeries,
    cfg: TvarConfig,
    n_boot: int = 10000,
    level: float = 0.99,
    seed: int = 0,
    n_jobs: int = 1,
    progress: bool = False,
    ceiling: float = DEFAULT_CEILING,
) -> CiBands:
    """Pointwise quantile bands of zeta under the null of no autocorrelation.

    Replication ``b`` draws from the random stream seeded by ``(seed, b, attempt)``,
    so the bands do not depend on ``n_jobs`` or execution order.
    """
    if n_boot < 100:
        raise ValueError(f"n_boot must be at least 100, got {n_boot}")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")

    indices = tqdm(range(n_boot), desc=f"bootstrap {returns.asset_id}", disable=not progress)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(returns, cfg, seed, index, ceiling) for index in indices
    )
    zetas = np.vstack([zeta for zeta, _, _ in results])
    n_failed = sum(failures for _, failures, _ in results)
    n_nonconverged = sum(not converged for _, _, converged in results)
    if n_failed > 0.01 * n_boot:
        raise BootstrapError(
            f"{returns.asset_id}: {n_failed} failed bootstrap fits exceed 1% of {n_boot}",
        )
    if n_failed:
        logger.warning(
            "%s: %d bootstrap fit(s) failed and were redrawn",
            returns.asset_id,
            n_failed,
        )
    if n_nonconverged:
        logger.info(
            "%s: %d of %d bootstrap fits stopped before feasible GLS convergence",
            returns.asset_id,
            n_nonconverged,
            n_boot,
        )

    lower, upper = np.quantile(zetas, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0)
    return CiBands(
        dates=returns.dates[cfg.q :],
        level=level,
        lower=lower,
        upper=upper,
        n_boot=n_boot,
        seed=seed,
        n_failed=n_failed,
        n_nonconverged=n_nonconverged,
    )


def _summary(dates: pd.DatetimeIndex, zeta: np.ndarray) -> ZetaSummary:
    if len(zeta) == 0:
        raise InsufficientDataError("no periods in the requested window")
    return ZetaSummary(
        mean=float(np.mean(zeta)),
        sd=float(np.std(zeta, ddof=1)) if len(zeta) > 1 else 0.0,
        n_periods=len(zeta),
        start=dates[0].date().isoformat(),
        end=dates[-1].date().isoformat(),
    )


def summarize_window(
    path: EfficiencyPath,
    start: Optional[DateLike] = None,
    end: Optional[DateLike] = None,
) -> ZetaSummary:
    """Mean and sd of zeta over an inclusive date window."""
    mask = np.ones(len(path.zeta), dtype=bool)
    if start is not None:
        mask &= path.dates >= pd.Timestamp(start)
    if end is not None:
        mask &= path.dates <= pd.Timestamp(end)
    return _summary(path.dates[mask], path.zeta[mask])


def classify(path: EfficiencyPath, bands: CiBands) -> EfficiencyVerdict:
    """Flag periods whose zeta exceeds the upper band."""
    if len(path.zeta) != len(bands.upper) or not path.dates.equals(bands.dates):
        raise ValueError(
            f"{path.asset_id}: efficiency path ({len(path.zeta)} periods) and bands "
            f"({len(bands.upper)} periods) are not aligned on dates",
        )
    flags = path.zeta > bands.upper
    return EfficiencyVerdict(
        asset_id=path.asset_id,
        dates=path.dates,
        inefficient_flags=flags,
        summary=_summary(path.dates, path.zeta),
        flagged_fraction=float(flags.mean()),
    )
