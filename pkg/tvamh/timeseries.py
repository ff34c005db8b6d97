"""Daily price ingestion, log returns and Table-style descriptive statistics."""
import logging
import warnings
from pathlib import Path
from typing import Optional, Union

import attr
import numpy as np
import pandas as pd

from tvamh.errors import IngestionError, InsufficientDataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _as_float_array(values) -> np.ndarray:
    return np.array(values, dtype=float, copy=True)


def _as_dates(values) -> pd.DatetimeIndex:
    return pd.DatetimeIndex(values)


def _check_strictly_increasing(instance, attribute, value):
    if len(value) > 1 and not (np.diff(value.asi8) > 0).all():
        raise ValueError(f"{attribute.name} must be strictly increasing")


@attr.frozen(eq=False)
class FormatConfig:
    """Column mapping of an input CSV (CoinMarketCap exports vary)."""

    date_column: str = "date"
    price_column: str = "close"
    date_format: Optional[str] = None


@attr.frozen(eq=False)
class PriceSeries:
    asset_id: str
    dates: pd.DatetimeIndex = attr.field(converter=_as_dates, validator=_check_strictly_increasing)
    prices: np.ndarray = attr.field(converter=_as_float_array)

    @prices.validator
    def _check_prices(self, attribute, value):
        if value.ndim != 1 or len(value) != len(self.dates):
            raise ValueError("prices and dates must be one-dimensional with equal length")
        if not (np.isfinite(value) & (value > 0)).all():
            raise ValueError("prices must be finite and strictly positive")

    def __len__(self) -> int:
        return len(self.prices)


@attr.frozen(eq=False)
class ReturnSeries:
    asset_id: str
    dates: pd.DatetimeIndex = attr.field(converter=_as_dates, validator=_check_strictly_increasing)
    values: np.ndarray = attr.field(converter=_as_float_array)

    @values.validator
    def _check_values(self, attribute, value):
        if value.ndim != 1 or len(value) != len(self.dates):
            raise ValueError("values and dates must be one-dimensional with equal length")
        if not np.isfinite(value).all():
            raise ValueError("returns must be finite")

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values, asset_id: str = "series", start: str = "2000-01-01"):
        """Wrap a bare array with consecutive daily dates."""
        values = np.asarray(values, dtype=float)
        return cls(asset_id, pd.date_range(start, periods=len(values), freq="D"), values)


@attr.frozen
class StatsSummary:
    mean: float
    sd: float
    min: float
    max: float
    n_obs: int


def load_prices(
    path: PathLike,
    format_config: FormatConfig = FormatConfig(),
    asset_id: Optional[str] = None,
) -> PriceSeries:
    """Read a daily close-price CSV into an ascending :class:`PriceSeries`.

    Row numbers in error messages count the header as row 1. Calendar gaps are
    kept as consecutive observations and reported with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError("file not found", path=str(path))
    try:
        frame = pd.read_csv(path, dtype=str, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot parse CSV ({exc})", path=str(path)) from exc

    columns = [format_config.date_column, format_config.price_column]
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise IngestionError(
            f"missing column(s) {missing}; found {list(frame.columns)}",
            path=str(path),
        )
    if frame.empty:
        raise IngestionError("no data rows", path=str(path))

    dates = pd.to_datetime(
        frame[format_config.date_column].str.strip(),
        format=format_config.date_format,
        errors="coerce",
    )
    if dates.dt.tz is not None:
        dates = dates.dt.tz_convert(None)
    prices = pd.to_numeric(
        frame[format_config.price_column].str.replace(",", "", regex=False).str.strip(),
        errors="coerce",
    )

    for index in range(len(frame)):
        row = index + 2
        if pd.isna(dates.iloc[index]):
            raise IngestionError(
                f"unparseable date {frame[format_config.date_column].iloc[index]!r}",
                path=str(path),
                row=row,
            )
        price = prices.iloc[index]
        if pd.isna(price) or not np.isfinite(price):
            raise IngestionError(
                f"unparseable price {frame[format_config.price_column].iloc[index]!r}",
                path=str(path),
                row=row,
            )
        if price <= 0:
            raise IngestionError(f"non-positive price {price}", path=str(path), row=row)

    duplicated = dates.duplicated(keep="first")
    if duplicated.any():
        index = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise IngestionError(
            f"duplicate date {dates.iloc[index].date().isoformat()}",
            path=str(path),
            row=index + 2,
        )

    order = np.argsort(dates.to_numpy(), kind="stable")
    dates = pd.DatetimeIndex(dates.to_numpy()[order]).normalize()
    values = prices.to_numpy(dtype=float)[order]

    gaps = np.diff(dates.asi8) // (86400 * 10**9) - 1
    if (gaps > 0).any():
        warnings.warn(
            f"{path}: {int((gaps > 0).sum())} calendar gap(s) totalling {int(gaps.sum())} "
            "missing day(s); observations are treated as consecutive",
        )

    series = PriceSeries(asset_id or path.stem.upper(), dates, values)
    logger.debug("loaded %d prices for %s from %s", len(series), series.asset_id, path)
    return series


def write_prices(
    series: PriceSeries,
    path: PathLike,
    format_config: FormatConfig = FormatConfig(),
) -> None:
    frame = pd.DataFrame(
        {
            format_config.date_column: series.dates.strftime("%Y-%m-%d"),
            format_config.price_column: series.prices,
        },
    )
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def log_returns(prices: PriceSeries) -> ReturnSeries:
    """Log first differences, dated at the later observation."""
    if len(prices) < 2:
        raise InsufficientDataError(
            f"{prices.asset_id}: need at least 2 prices for a return, got {len(prices)}",
        )
    values = np.log(prices.prices[1:] / prices.prices[:-1])
    return ReturnSeries(prices.asset_id, prices.dates[1:], values)


def descriptive_stats(returns: ReturnSeries) -> StatsSummary:
    values = returns.values
    if len(values) == 0:
        raise InsufficientDataError(f"{returns.asset_id}: empty return series")
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    low, high = float(np.min(values)), float(np.max(values))
    # summation rounding can push the mean of a constant series past its bounds
    mean = min(max(float(np.mean(values)), low), high)
    return StatsSummary(mean=mean, sd=sd, min=low, max=high, n_obs=len(values))
