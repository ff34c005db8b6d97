"""Run configuration.

``RunConfig`` is read the way an environ-config class is read from the
environment; a JSON config file, ``TVAMH_*`` environment variables and
command-line flags are flattened into one ``TVAMH_<GROUP>_<NAME>`` mapping,
later sources taking precedence.
"""
import json
import os
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import attr
import environ

from tvamh.errors import ConfigError
from tvamh.timeseries import FormatConfig
from tvamh.tvar import InterceptDynamics, TvarConfig, VarianceRatioMode
from tvamh.unitroot import DeterministicSpec

PREFIX = "TVAMH"
FAST_N_BOOT = 500
CONFIG_LINE = "# config: "


@environ.config(prefix=PREFIX)
class RunConfig:
    @environ.config
    class Data:
        inputs: str = environ.var(default="")
        date_column: str = environ.var(default="date")
        price_column: str = environ.var(default="close")
        date_format: str = environ.var(default="")

    @environ.config
    class Model:
        q: str = environ.var(default="auto")
        max_lag: str = environ.var(default="auto")
        adf_spec: str = environ.var(default="ct")
        intercept: str = environ.var(default="random_walk")
        lam: str = environ.var(default="")
        fgls_max_iter: int = environ.var(default=100, converter=int)
        fgls_tol: float = environ.var(default=1e-8, converter=float)
        pooled_state_variance: bool = environ.bool_var(default=False)

    @environ.config
    class Bootstrap:
        enabled: bool = environ.bool_var(default=True)
        n_boot: int = environ.var(default=10000, converter=int)
        fast: bool = environ.bool_var(default=False)
        level: float = environ.var(default=0.99, converter=float)
        seed: int = environ.var(default=0, converter=int)
        n_jobs: int = environ.var(default=1, converter=int)
        progress: bool = environ.bool_var(default=False)

    @environ.config
    class Output:
        directory: str = environ.var(default="results")
        format: str = environ.var(default="csv")
        irf_horizon: int = environ.var(default=0, converter=int)

    @environ.config
    class Validate:
        n_obs: int = environ.var(default=200, converter=int)
        q: int = environ.var(default=2, converter=int)
        lam: float = environ.var(default=100.0, converter=float)
        tolerance: float = environ.var(default=1e-6, converter=float)
        seed: int = environ.var(default=0, converter=int)
        n_seeds: int = environ.var(default=5, converter=int)
        n_boot: int = environ.var(default=200, converter=int)
        recovery_n_obs: int = environ.var(default=2000, converter=int)

    data: Data = environ.group(Data)
    model: Model = environ.group(Model)
    bootstrap: Bootstrap = environ.group(Bootstrap)
    output: Output = environ.group(Output)
    validate: Validate = environ.group(Validate)


GROUPS = OrderedDict(
    data=RunConfig.Data,
    model=RunConfig.Model,
    bootstrap=RunConfig.Bootstrap,
    output=RunConfig.Output,
    validate=RunConfig.Validate,
)


def _field_names(group: str):
    return [field.name for field in attr.fields(GROUPS[group])]


def _to_text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Mapping):
        return ",".join(f"{key}={path}" for key, path in value.items())
    if isinstance(value, (list, tuple)):
        return ",".join(str(item) for item in value)
    return str(value)


def flatten(nested: Mapping[str, Mapping[str, Any]]) -> Dict[str, str]:
    """Nested ``{group: {name: value}}`` to ``TVAMH_GROUP_NAME`` keys."""
    flat = {}
    for group, values in nested.items():
        if group not in GROUPS:
            raise ConfigError(f"unknown config section {group!r}; expected one of {list(GROUPS)}")
        if not isinstance(values, Mapping):
            raise ConfigError(f"config section {group!r} must be an object")
        known = _field_names(group)
        for name, value in values.items():
            if name not in known:
                raise ConfigError(f"unknown key {group}.{name}; expected one of {known}")
            if value is None:
                continue
            flat[f"{PREFIX}_{group.upper()}_{name.upper()}"] = _to_text(value)
    return flat


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON config file, or the config embedded in a previous output."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if text.startswith(CONFIG_LINE):
            nested = json.loads(text.splitlines()[0][len(CONFIG_LINE) :])
        else:
            nested = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(nested, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in nested and isinstance(nested["config"], dict):
        nested = nested["config"]
    return nested


def build_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    env = os.environ if env is None else env
    mapping: Dict[str, str] = {}
    if config_file is not None:
        mapping.update(flatten(load_config_file(config_file)))
    mapping.update({key: value for key, value in env.items() if key.startswith(f"{PREFIX}_")})
    if overrides:
        mapping.update(flatten(overrides))
    try:
        cfg = RunConfig.from_environ(mapping)
    except (ValueError, TypeError, environ.MissingEnvValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    check(cfg)
    return cfg


def _positive_int_or_auto(value: str, name: str, minimum: int) -> Optional[int]:
    if value.strip().lower() == "auto":
        return None
    try:
        number = int(value)
    except ValueError as exc:
        raise ConfigError(f"{name} must be 'auto' or an integer, got {value!r}") from exc
    if number < minimum:
        raise ConfigError(f"{name} must be at least {minimum}, got {number}")
    return number


def lag_order(cfg: RunConfig) -> Optional[int]:
    """Fixed lag order q, or None when BIC selects it."""
    return _positive_int_or_auto(cfg.model.q, "model.q", 1)


def max_lag(cfg: RunConfig) -> Optional[int]:
    return _positive_int_or_auto(cfg.model.max_lag, "model.max_lag", 0)


def lambdas(cfg: RunConfig):
    if not cfg.model.lam.strip():
        return None
    try:
        values = [float(item) for item in cfg.model.lam.split(",")]
    except ValueError as exc:
        raise ConfigError(f"model.lam must be numbers, got {cfg.model.lam!r}") from exc
    if any(value < 0 for value in values):
        raise ConfigError(f"model.lam must be non-negative, got {cfg.model.lam!r}")
    return values


def inputs(cfg: RunConfig) -> Dict[str, Path]:
    """Asset id to CSV path, in configured order."""
    assets: Dict[str, Path] = OrderedDict()
    for item in filter(None, (part.strip() for part in cfg.data.inputs.split(","))):
        if "=" in item:
            asset, path = (part.strip() for part in item.split("=", 1))
        else:
            path = item
            asset = Path(item).stem.upper()
        if asset in assets:
            raise ConfigError(f"asset {asset!r} listed twice in data.inputs")
        assets[asset] = Path(path)
    return assets


def format_config(cfg: RunConfig) -> FormatConfig:
    return FormatConfig(
        date_column=cfg.data.date_column,
        price_column=cfg.data.price_column,
        date_format=cfg.data.date_format or None,
    )


def n_boot(cfg: RunConfig) -> int:
    return FAST_N_BOOT if cfg.bootstrap.fast else cfg.bootstrap.n_boot


def tvar_config(cfg: RunConfig, q: int) -> TvarConfig:
    lam = lambdas(cfg)
    try:
        return TvarConfig(
            q=q,
            intercept_dynamics=cfg.model.intercept,
            variance_ratio_mode=(
                VarianceRatioMode.FEASIBLE_GLS if lam is None else VarianceRatioMode.FIXED
            ),
            lam=lam,
            fgls_max_iter=cfg.model.fgls_max_iter,
            fgls_tol=cfg.model.fgls_tol,
            pooled_state_variance=cfg.model.pooled_state_variance,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid model configuration: {exc}") from exc


def check(cfg: RunConfig) -> None:
    """Validate values that environ-config converters cannot."""
    lag_order(cfg)
    max_lag(cfg)
    lambdas(cfg)
    inputs(cfg)
    choices = {
        "model.adf_spec": (cfg.model.adf_spec, [spec.value for spec in DeterministicSpec]),
        "model.intercept": (cfg.model.intercept, [dyn.value for dyn in InterceptDynamics]),
        "output.format": (cfg.output.format, ["csv", "json"]),
    }
    for name, (value, allowed) in choices.items():
        if value not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
    if not 0 < cfg.bootstrap.level < 1:
        raise ConfigError(f"bootstrap.level must lie in (0, 1), got {cfg.bootstrap.level}")
    if cfg.bootstrap.enabled and n_boot(cfg) < 100:
        raise ConfigError(f"bootstrap.n_boot must be at least 100, got {n_boot(cfg)}")
    if cfg.bootstrap.seed < 0:
        raise ConfigError(f"bootstrap.seed must be non-negative, got {cfg.bootstrap.seed}")
    if cfg.bootstrap.n_jobs == 0:
        raise ConfigError("bootstrap.n_jobs must be non-zero")
    if cfg.model.fgls_max_iter < 1 or cfg.model.fgls_tol <= 0:
        raise ConfigError("model.fgls_max_iter must be >= 1 and model.fgls_tol positive")
    if cfg.output.irf_horizon < 0:
        raise ConfigError("output.irf_horizon must be non-negative")
    if cfg.validate.n_obs <= 2 * cfg.validate.q + 10 or cfg.validate.q < 1:
        raise ConfigError("validate.n_obs too small for validate.q")
    if cfg.validate.n_seeds < 1 or cfg.validate.n_boot < 100 or cfg.validate.lam <= 0:
        raise ConfigError("validate needs n_seeds >= 1, n_boot >= 100 and a positive lam")


def require_inputs(cfg: RunConfig) -> Dict[str, Path]:
    assets = inputs(cfg)
    if not assets:
        raise ConfigError("no input files configured (data.inputs or --input)")
    missing = [str(path) for path in assets.values() if not path.is_file()]
    if missing:
        raise ConfigError(f"input file(s) not found: {', '.join(missing)}")
    return assets


def embedded(cfg: RunConfig) -> Dict[str, Dict[str, Any]]:
    """Resolved config for embedding in outputs; the output directory is left out."""
    nested = attr.asdict(cfg)
    nested["output"].pop("directory")
    return nested
