"""Augmented Dickey-Fuller pretest and BIC lag selection."""
import logging
import warnings
from enum import Enum
from typing import Optional, Tuple

import attr
import numpy as np
import pandas as pd
from statsmodels.regression.linear_model import OLS
from statsmodels.tsa.tsatools import lagmat

from tvamh.errors import InsufficientDataError, SingularSystemError
from tvamh.timeseries import ReturnSeries

logger = logging.getLogger(__name__)


class DeterministicSpec(str, Enum):
    CONSTANT = "c"
    CONSTANT_TREND = "ct"


class ModelFamily(str, Enum):
    ADF_AUGMENTATION = "adf_augmentation"
    AR_LEVEL = "ar_level"


# 1% values; only these thresholds are reported
CRITICAL_VALUES_1PCT = {
    DeterministicSpec.CONSTANT: -3.43,
    DeterministicSpec.CONSTANT_TREND: -3.96,
}


@attr.frozen
class AdfResult:
    statistic: float
    selected_lag: int
    deterministic_spec: DeterministicSpec
    critical_value_1pct: float
    reject_unit_root_1pct: bool
    n_obs: int
    max_lag: int


def default_max_lag(n_obs: int) -> int:
    return int(np.floor(12.0 * (n_obs / 100.0) ** 0.25))


def _deterministics(n_rows: int, spec: DeterministicSpec) -> np.ndarray:
    if spec is DeterministicSpec.CONSTANT:
        return np.ones((n_rows, 1))
    return np.column_stack([np.ones(n_rows), np.arange(1, n_rows + 1, dtype=float)])


def _ols(y: np.ndarray, exog: np.ndarray):
    if np.linalg.matrix_rank(exog) < exog.shape[1]:
        raise SingularSystemError(
            f"regression design of shape {exog.shape} is rank deficient "
            "(constant or collinear series)",
        )
    return OLS(y, exog).fit()


def _bic(ssr: float, n_obs: int, n_params: int) -> float:
    return n_obs * np.log(ssr / n_obs) + n_params * np.log(n_obs)


def _adf_design(
    values: np.ndarray,
    lags: int,
    spec: DeterministicSpec,
    start: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Response and regressors of the ADF regression.

    Columns are the deterministic terms, the lagged level and ``lags`` lagged
    differences. ``start`` (the largest candidate lag) fixes a common sample.
    """
    start = lags if start is None else start
    diffs = np.diff(values)
    if start == 0:
        lagged = diffs[:, None]
    else:
        lagged = lagmat(diffs, maxlag=start, trim="both", original="in")
    y = lagged[:, 0]
    level = values[start:-1]
    exog = np.column_stack(
        [_deterministics(len(y), spec), level, lagged[:, 1 : lags + 1]],
    )
    return y, exog


def _ar_design(values: np.ndarray, lags: int, start: int) -> Tuple[np.ndarray, np.ndarray]:
    lagged = lagmat(values, maxlag=start, trim="both", original="in")
    exog = np.column_stack([np.ones(len(lagged)), lagged[:, 1 : lags + 1]])
    return lagged[:, 0], exog


def bic_table(
    returns: ReturnSeries,
    max_lag: Optional[int] = None,
    model_family: ModelFamily = ModelFamily.AR_LEVEL,
    spec: DeterministicSpec = DeterministicSpec.CONSTANT_TREND,
) -> pd.Series:
    """``n ln(RSS/n) + k ln(n)`` per candidate lag, all on the sample of the largest.

    Candidates are ``0..max_lag`` for ADF augmentation and ``1..max_lag`` for an
    AR model in levels.
    """
    values = returns.values
    model_family = ModelFamily(model_family)
    spec = DeterministicSpec(spec)
    if max_lag is None:
        max_lag = default_max_lag(len(values))
    if max_lag < 0:
        raise ValueError(f"max_lag must be non-negative, got {max_lag}")

    if model_family is ModelFamily.AR_LEVEL:
        max_lag = max(max_lag, 1)
        candidates = range(1, max_lag + 1)
        n_rows = len(values) - max_lag
        largest = max_lag + 1
    else:
        candidates = range(0, max_lag + 1)
        n_rows = len(values) - 1 - max_lag
        largest = max_lag + len(spec.value) + 1
    if n_rows <= largest:
        raise InsufficientDataError(
            f"{returns.asset_id}: {len(values)} observations cannot identify {largest} "
            f"coefficients with max_lag={max_lag}",
        )

    criteria = []
    for lags in candidates:
        if model_family is ModelFamily.AR_LEVEL:
            y, exog = _ar_design(values, lags, max_lag)
        else:
            y, exog = _adf_design(values, lags, spec, start=max_lag)
        result = _ols(y, exog)
        criteria.append(_bic(float(result.ssr), len(y), exog.shape[1]))
        logger.debug("%s lag %d: BIC %.6f", model_family.value, lags, criteria[-1])
    return pd.Series(criteria, index=pd.Index(candidates, name="lag"), name="bic")


def bic_lag_select(
    returns: ReturnSeries,
    max_lag: Optional[int] = None,
    model_family: ModelFamily = ModelFamily.AR_LEVEL,
    spec: DeterministicSpec = DeterministicSpec.CONSTANT_TREND,
) -> int:
    """Lag minimising the BIC of :func:`bic_table`. Ties go to the smaller lag."""
    criteria = bic_table(returns, max_lag, model_family, spec)
    candidates = criteria.index
    max_lag = int(candidates[-1])
    selected = int(candidates[int(np.argmin(criteria.values))])
    if selected == max_lag and max_lag > candidates[0]:
        warnings.warn(
            f"{returns.asset_id}: BIC selected the largest candidate lag {selected}; "
            "consider a larger max_lag",
        )
    return selected


def adf_test(
    returns: ReturnSeries,
    max_lag: Optional[int] = None,
    spec: DeterministicSpec = DeterministicSpec.CONSTANT_TREND,
) -> AdfResult:
    """ADF t-ratio on the lagged level, augmentation lag chosen by BIC.

    The chosen lag is refitted on the largest sample it allows.
    """
    spec = DeterministicSpec(spec)
    values = returns.values
    if max_lag is None:
        max_lag = default_max_lag(len(values))
    if max_lag < 0:
        raise ValueError(f"max_lag must be non-negative, got {max_lag}")
    if len(values) <= max_lag + 10:
        raise InsufficientDataError(
            f"{returns.asset_id}: ADF with max_lag={max_lag} needs more than "
            f"{max_lag + 10} observations, got {len(values)}",
        )
    if np.ptp(values) == 0:
        raise SingularSystemError(f"{returns.asset_id}: constant series, ADF regression singular")

    lags = bic_lag_select(returns, max_lag, ModelFamily.ADF_AUGMENTATION, spec)
    y, exog = _adf_design(values, lags, spec)
    result = _ols(y, exog)
    statistic = float(result.tvalues[len(spec.value)])
    critical = CRITICAL_VALUES_1PCT[spec]
    return AdfResult(
        statistic=statistic,
        selected_lag=lags,
        deterministic_spec=spec,
        critical_value_1pct=critical,
        reject_unit_root_1pct=bool(statistic < critical),
        n_obs=len(y),
        max_lag=max_lag,
    )
