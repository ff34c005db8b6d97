"""Command line: ``tvamh stats``, ``tvamh efficiency`` and ``tvamh validate``."""
import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd

from tvamh import config as conf
from tvamh.efficiency import (
    bootstrap_bands,
    classify,
    efficiency_degree,
    summarize_window,
)
from tvamh.errors import InsufficientDataError, NumericalError, TvamhError, ValidationFailure
from tvamh.io import write_record, write_table
from tvamh.timeseries import ReturnSeries, descriptive_stats, load_prices, log_returns
from tvamh.tvar import fit_tvar, impulse_response
from tvamh.unitroot import ModelFamily, adf_test, bic_lag_select
from tvamh.validation import run_battery

logger = logging.getLogger(__name__)

OPTION_TARGETS = {
    "inputs": ("data", "inputs"),
    "date_column": ("data", "date_column"),
    "price_column": ("data", "price_column"),
    "q": ("model", "q"),
    "max_lag": ("model", "max_lag"),
    "adf_spec": ("model", "adf_spec"),
    "intercept": ("model", "intercept"),
    "lam": ("model", "lam"),
    "n_boot": ("bootstrap", "n_boot"),
    "fast": ("bootstrap", "fast"),
    "level": ("bootstrap", "level"),
    "seed": ("bootstrap", "seed"),
    "n_jobs": ("bootstrap", "n_jobs"),
    "progress": ("bootstrap", "progress"),
    "output_dir": ("output", "directory"),
    "fmt": ("output", "format"),
    "irf_horizon": ("output", "irf_horizon"),
}


def _dates(index: pd.DatetimeIndex) -> List[str]:
    return list(index.strftime("%Y-%m-%d"))


def _load_returns(cfg: conf.RunConfig, asset: str, path: Path) -> ReturnSeries:
    return log_returns(load_prices(path, conf.format_config(cfg), asset_id=asset))


def _output_dir(cfg: conf.RunConfig) -> Path:
    return Path(cfg.output.directory)


def _skip_reason(exc: NumericalError) -> str:
    if isinstance(exc, InsufficientDataError):
        return "insufficient observations"
    return f"singular regression: {exc}"


def cmd_stats(cfg: conf.RunConfig) -> pd.DataFrame:
    """Descriptive statistics, ADF pretest and BIC AR order per asset."""
    rows = []
    for asset, path in conf.require_inputs(cfg).items():
        returns = _load_returns(cfg, asset, path)
        summary = descriptive_stats(returns)
        row: Dict[str, Any] = {
            "asset": asset,
            "start": returns.dates[0].date().isoformat(),
            "end": returns.dates[-1].date().isoformat(),
            "n_obs": summary.n_obs,
            "mean": summary.mean,
            "sd": summary.sd,
            "min": summary.min,
            "max": summary.max,
        }
        try:
            adf = adf_test(returns, conf.max_lag(cfg), cfg.model.adf_spec)
            row.update(
                adf_statistic=adf.statistic,
                adf_lag=adf.selected_lag,
                adf_critical_1pct=adf.critical_value_1pct,
                adf_reject_1pct=adf.reject_unit_root_1pct,
                adf_note="",
            )
        except NumericalError as exc:
            logger.warning("%s: ADF skipped (%s)", asset, exc)
            row.update(
                adf_statistic=np.nan,
                adf_lag=None,
                adf_critical_1pct=np.nan,
                adf_reject_1pct=None,
                adf_note=_skip_reason(exc),
            )
        try:
            row["ar_order"] = bic_lag_select(returns, conf.max_lag(cfg), ModelFamily.AR_LEVEL)
        except NumericalError as exc:
            logger.warning("%s: AR order not selected (%s)", asset, exc)
            row["ar_order"] = None
        rows.append(row)

    frame = pd.DataFrame(rows)
    for column in ("adf_lag", "ar_order"):
        frame[column] = frame[column].astype("Int64")
    frame["adf_reject_1pct"] = frame["adf_reject_1pct"].astype("boolean")
    write_table(frame, _output_dir(cfg) / "stats", cfg.output.format, conf.embedded(cfg))
    return frame


def _resolve_q(cfg: conf.RunConfig, returns: ReturnSeries):
    q = conf.lag_order(cfg)
    if q is not None:
        return q, "config"
    q = bic_lag_select(returns, conf.max_lag(cfg), ModelFamily.AR_LEVEL)
    logger.info("%s: BIC selected AR(%d)", returns.asset_id, q)
    return q, "bic"


def _coefficient_frame(fit) -> pd.DataFrame:
    frame = pd.DataFrame({"date": _dates(fit.dates)})
    errors = fit.standard_errors()
    for column in range(fit.coef_paths.shape[1]):
        frame[f"alpha_{column}"] = fit.coef_paths[:, column]
    for column in range(fit.coef_paths.shape[1]):
        frame[f"se_{column}"] = errors[:, column]
    return frame


def _irf_frame(fit, horizon: int) -> pd.DataFrame:
    responses = np.vstack([impulse_response(fit, t, horizon) for t in range(fit.n_periods)])
    frame = pd.DataFrame(responses, columns=[f"psi_{h}" for h in range(horizon + 1)])
    frame.insert(0, "date", _dates(fit.dates))
    return frame


def cmd_efficiency(cfg: conf.RunConfig) -> Dict[str, Dict[str, Any]]:
    """returns -> q -> TV-AR fit -> zeta -> null bootstrap bands -> verdict, per asset."""
    fmt, out, embedded = cfg.output.format, _output_dir(cfg), conf.embedded(cfg)
    summaries: Dict[str, Dict[str, Any]] = {}
    paths = {}
    for asset, source in conf.require_inputs(cfg).items():
        returns = _load_returns(cfg, asset, source)
        q, q_source = _resolve_q(cfg, returns)
        tvar_cfg = conf.tvar_config(cfg, q)
        fit = fit_tvar(returns, tvar_cfg)
        path = efficiency_degree(fit)
        paths[asset] = path

        series = pd.DataFrame({"date": _dates(path.dates), "zeta": path.zeta})
        overall = summarize_window(path)
        summary: Dict[str, Any] = {
            "asset": asset,
            "q": q,
            "q_source": q_source,
            "n_periods": fit.n_periods,
            "start": series["date"].iloc[0],
            "end": series["date"].iloc[-1],
            "mean_zeta": overall.mean,
            "sd_zeta": overall.sd,
            "n_capped": int(path.capped_flags.sum()),
            "sigma_u2": fit.sigma_u2,
            "lambda_used": ";".join(f"{value:.17g}" for value in fit.lambda_used),
            "fgls_converged": fit.converged,
            "fgls_iterations": fit.iterations,
        }
        if cfg.bootstrap.enabled:
            bands = bootstrap_bands(
                returns,
                tvar_cfg,
                n_boot=conf.n_boot(cfg),
                level=cfg.bootstrap.level,
                seed=cfg.bootstrap.seed,
                n_jobs=cfg.bootstrap.n_jobs,
                progress=cfg.bootstrap.progress,
            )
            verdict = classify(path, bands)
            series["lower"] = bands.lower
            series["upper"] = bands.upper
            series["inefficient_flag"] = verdict.inefficient_flags
            summary.update(
                flagged_fraction=verdict.flagged_fraction,
                n_boot=bands.n_boot,
                seed=bands.seed,
                level=bands.level,
                n_failed_fits=bands.n_failed,
            )
        series["capped"] = path.capped_flags

        stem = out / asset.lower()
        write_table(series, Path(f"{stem}_efficiency"), fmt, embedded, {"summary": summary})
        write_record(summary, Path(f"{stem}_summary"), fmt, embedded)
        write_table(_coefficient_frame(fit), Path(f"{stem}_coefficients"), fmt, embedded)
        if cfg.output.irf_horizon:
            write_table(
                _irf_frame(fit, cfg.output.irf_horizon),
                Path(f"{stem}_irf"),
                fmt,
                embedded,
            )
        summaries[asset] = summary

    if len(paths) > 1:
        start = max(path.dates[0] for path in paths.values())
        end = min(path.dates[-1] for path in paths.values())
        if start <= end:
            rows = []
            for asset, path in paths.items():
                window = summarize_window(path, start, end)
                rows.append(
                    {
                        "asset": asset,
                        "start": window.start,
                        "end": window.end,
                        "n_periods": window.n_periods,
                        "mean_zeta": window.mean,
                        "sd_zeta": window.sd,
                    },
                )
            write_table(pd.DataFrame(rows), out / "common_period", fmt, embedded)
        else:
            logger.warning("assets share no common period; common_period summary skipped")
    return summaries


def cmd_validate(cfg: conf.RunConfig) -> pd.DataFrame:
    report = run_battery(cfg.validate, n_jobs=cfg.bootstrap.n_jobs)
    frame = pd.DataFrame(
        [
            {
                "check": check.name,
                "passed": check.passed,
                "measured": check.measured,
                "threshold": check.threshold,
                "seconds": round(check.seconds, 3),
                "detail": check.detail,
            }
            for check in report.checks
        ],
    )
    # timings vary between runs, so they are reported but not written
    write_table(
        frame.drop(columns="seconds"),
        _output_dir(cfg) / "validation",
        cfg.output.format,
        conf.embedded(cfg),
    )
    if not report.passed:
        failed = [check for check in report.checks if not check.passed]
        for check in failed:
            logger.error(
                "%s failed: measured %.6g, threshold %.6g (%s)",
                check.name,
                check.measured,
                check.threshold,
                check.detail,
            )
        names = ", ".join(check.name for check in failed)
        raise ValidationFailure(f"validation failed: {names}")
    return frame


def run_options(command):
    """Flags mirroring the ``RunConfig`` fields; unset flags leave the config alone."""
    options = [
        click.option(
            "-i",
            "--input",
            "inputs",
            multiple=True,
            help="ASSET=path.csv (repeatable); a bare path uses the file stem as asset id.",
        ),
        click.option("--date-column", default=None),
        click.option("--price-column", default=None),
        click.option("-q", "--q", "q", default=None, help="AR order or 'auto' (BIC)."),
        click.option("--max-lag", default=None, help="Largest BIC candidate lag or 'auto'."),
        click.option("--adf-spec", type=click.Choice(["c", "ct"]), default=None),
        click.option(
            "--intercept",
            type=click.Choice(["random_walk", "constant"]),
            default=None,
        ),
        click.option(
            "--lam",
            default=None,
            help="Fixed smoothing ratio(s), comma separated; empty means feasible GLS.",
        ),
        click.option("--n-boot", type=int, default=None),
        click.option("--fast/--no-fast", default=None, help="Use 500 bootstrap replications."),
        click.option("--level", type=float, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--n-jobs", type=int, default=None),
        click.option("--progress/--no-progress", default=None),
        click.option("-o", "--output-dir", default=None),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None),
        click.option("--irf-horizon", type=int, default=None),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _overrides(options: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    nested: Dict[str, Dict[str, Any]] = {}
    for name, value in options.items():
        if value is None or value == ():
            continue
        group, key = OPTION_TARGETS[name]
        nested.setdefault(group, {})[key] = value
    return nested


def _handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except TvamhError as exc:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _resolve(ctx: click.Context, options: Dict[str, Any]) -> conf.RunConfig:
    cfg = conf.build_config(ctx.obj.get("config_file"), _overrides(options))
    logger.info("resolved config: %s", json.dumps(conf.embedded(cfg), sort_keys=True))
    return cfg


@click.group()
@click.option(
    "-c",
    "--config",
    "config_file",
    default=None,
    help="JSON config file, or an output file whose embedded config should be re-run.",
)
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug logging.")
@click.pass_context
def main(ctx: click.Context, config_file: Optional[str], verbose: int):
    """Time-varying weak-form market efficiency of daily asset returns."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    ctx.obj = {"config_file": config_file}


@main.command()
@run_options
@click.pass_context
@_handle_errors
def stats(ctx: click.Context, **options):
    """Descriptive statistics and ADF unit-root tests of log returns."""
    cfg = _resolve(ctx, options)
    frame = cmd_stats(cfg)
    click.echo(frame.to_string(index=False))


@main.command()
@run_options
@click.pass_context
@_handle_errors
def efficiency(ctx: click.Context, **options):
    """Efficiency degree with null bootstrap bands, per asset."""
    cfg = _resolve(ctx, options)
    summaries = cmd_efficiency(cfg)
    click.echo(f"config: {json.dumps(conf.embedded(cfg), sort_keys=True)}")
    click.echo(f"seed={cfg.bootstrap.seed} n_boot={conf.n_boot(cfg)} level={cfg.bootstrap.level}")
    for asset, summary in summaries.items():
        flagged = summary.get("flagged_fraction")
        click.echo(
            f"{asset}: q={summary['q']} ({summary['q_source']}) "
            f"mean zeta={summary['mean_zeta']:.4f} sd zeta={summary['sd_zeta']:.4f}"
            + ("" if flagged is None else f" flagged={flagged:.4f}"),
        )


@main.command()
@run_options
@click.pass_context
@_handle_errors
def validate(ctx: click.Context, **options):
    """Kalman-oracle, brute-force and Monte-Carlo checks of the estimator."""
    cfg = _resolve(ctx, options)
    frame = cmd_validate(cfg)
    click.echo(frame.to_string(index=False))


if __name__ == "__main__":
    main()
