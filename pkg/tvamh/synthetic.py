"""Synthetic TV-AR data and a Kalman-smoother oracle for the GLS estimator."""
import logging
from enum import Enum
from typing import Optional, Sequence, Tuple

import attr
import numpy as np

from tvamh.errors import ExplosivePathError, FilterError
from tvamh.timeseries import ReturnSeries
from tvamh.tvar import regressor_matrix

logger = logging.getLogger(__name__)

EXPLOSIVE_RADIUS = 1.2
DIFFUSE_VARIANCE = 1e7


class DgpKind(str, Enum):
    CONSTANT_AR = "constant_ar"
    RANDOM_WALK_COEFFS = "random_walk_coeffs"
    DETERMINISTIC_PATH = "deterministic_path"


def _optional_array(value) -> Optional[np.ndarray]:
    return None if value is None else np.array(value, dtype=float)


def companion_radius(ar_coefs: Sequence[float]) -> float:
    """Spectral radius of the AR companion matrix."""
    ar_coefs = np.asarray(ar_coefs, dtype=float)
    if not ar_coefs.any():
        return 0.0
    return float(np.abs(np.roots(np.concatenate([[1.0], -ar_coefs]))).max())


@attr.frozen(eq=False)
class DgpSpec:
    """Data-generating process.

    ``coefficients`` holds (intercept, a_1..a_q): the constant vector for
    ``constant_ar`` and the starting point for ``random_walk_coeffs``.
    ``state_sd`` is the per-coefficient random-walk innovation sd and ``path``
    the (n_obs, q+1) matrix of a ``deterministic_path``.
    """

    kind: DgpKind = attr.field(converter=DgpKind)
    q: int = attr.field(converter=int)
    n_obs: int = attr.field(converter=int)
    seed: int = attr.field(default=0, converter=int)
    innovation_sd: float = attr.field(default=1.0, converter=float)
    coefficients: Optional[np.ndarray] = attr.field(default=None, converter=_optional_array)
    state_sd: Optional[np.ndarray] = attr.field(default=None, converter=_optional_array)
    path: Optional[np.ndarray] = attr.field(default=None, converter=_optional_array)
    burn_in: int = attr.field(default=200, converter=int)

    def __attrs_post_init__(self):
        k = self.q + 1
        if self.q < 1 or self.n_obs <= self.q or self.innovation_sd <= 0:
            raise ValueError("need q >= 1, n_obs > q and a positive innovation sd")
        if self.kind is DgpKind.DETERMINISTIC_PATH:
            if self.path is None or self.path.shape != (self.n_obs, k):
                raise ValueError(f"deterministic_path needs a ({self.n_obs}, {k}) path")
            return
        if self.coefficients is None or self.coefficients.shape != (k,):
            raise ValueError(f"{self.kind.value} needs {k} coefficients (intercept first)")
        if self.kind is DgpKind.CONSTANT_AR:
            radius = companion_radius(self.coefficients[1:])
            if radius >= 1:
                raise ExplosivePathError(
                    f"constant AR coefficients {self.coefficients[1:]} are not stationary "
                    f"(companion spectral radius {radius:.4f})",
                )
        elif self.state_sd is None or np.size(self.state_sd) not in (1, k):
            raise ValueError(f"random_walk_coeffs needs 1 or {k} state sd values")

    @classmethod
    def constant_ar(cls, ar_coefs: Sequence[float], n_obs: int, seed: int = 0, **kwargs):
        ar_coefs = list(ar_coefs)
        intercept = kwargs.pop("intercept", 0.0)
        return cls(
            DgpKind.CONSTANT_AR,
            q=len(ar_coefs),
            n_obs=n_obs,
            seed=seed,
            coefficients=[intercept] + ar_coefs,
            **kwargs,
        )


@attr.frozen(eq=False)
class Simulation:
    returns: ReturnSeries
    coef_paths: np.ndarray


def simulate(spec: DgpSpec) -> Simulation:
    """Generate ``x_t`` along the coefficient paths of ``spec``.

    ``coef_paths`` is aligned with the rows of a TV-AR(q) fit (periods q..n-1).
    """
    rng = np.random.default_rng(spec.seed)
    q, k = spec.q, spec.q + 1
    burn = spec.burn_in if spec.kind is DgpKind.CONSTANT_AR else 0
    total = spec.n_obs + burn

    if spec.kind is DgpKind.CONSTANT_AR:
        paths = np.tile(spec.coefficients, (total, 1))
    elif spec.kind is DgpKind.RANDOM_WALK_COEFFS:
        state_sd = np.broadcast_to(spec.state_sd, (k,))
        steps = rng.normal(0.0, 1.0, size=(total, k)) * state_sd
        steps[0] = 0.0
        paths = spec.coefficients + np.cumsum(steps, axis=0)
        radii = np.array([companion_radius(row[1:]) for row in paths])
        if (radii > EXPLOSIVE_RADIUS).any():
            period = int(np.argmax(radii > EXPLOSIVE_RADIUS))
            raise ExplosivePathError(
                f"random-walk coefficients explosive from period {period} "
                f"(companion spectral radius {radii[period]:.3f} > {EXPLOSIVE_RADIUS})",
            )
    else:
        paths = spec.path

    shocks = rng.normal(0.0, spec.innovation_sd, size=total)
    values = np.zeros(total)
    for t in range(total):
        lags = values[max(t - q, 0) : t][::-1]
        values[t] = paths[t, 0] + paths[t, 1 : 1 + len(lags)] @ lags + shocks[t]

    values, paths = values[burn:], paths[burn:]
    logger.debug("simulated %s, q=%d, n=%d, seed=%d", spec.kind.value, q, spec.n_obs, spec.seed)
    return Simulation(ReturnSeries.from_values(values, asset_id="SIM"), paths[q:])


def kalman_smoother_oracle(
    returns: ReturnSeries,
    q: int,
    sigma_u2: float,
    sigma_v2: Sequence[float],
    initial_variance: float = DIFFUSE_VARIANCE,
) -> np.ndarray:
    """Fixed-interval (RTS) smoothed coefficient paths of the TV-AR state-space form.

    The state is (a_0t, ..., a_qt) with identity transition and diagonal state
    noise ``sigma_v2`` (a zero entry keeps that coefficient constant); the
    initial state is approximately diffuse with variance ``initial_variance``.
    """
    if sigma_u2 <= 0:
        raise ValueError(f"sigma_u2 must be positive, got {sigma_u2}")
    regressors = regressor_matrix(returns.values, q)
    observations = returns.values[q:]
    n_periods, k = regressors.shape
    state_noise = np.diag(np.broadcast_to(np.asarray(sigma_v2, dtype=float), (k,)))
    if (np.diag(state_noise) < 0).any():
        raise ValueError("state variances must be non-negative")

    filtered = np.zeros((n_periods, k))
    filtered_cov = np.zeros((n_periods, k, k))
    predicted_cov = np.zeros((n_periods, k, k))
    mean = np.zeros(k)
    cov = initial_variance * np.eye(k)
    identity = np.eye(k)
    for t in range(n_periods):
        if t > 0:
            cov = cov + state_noise
        predicted_cov[t] = cov
        z = regressors[t]
        innovation_var = z @ cov @ z + sigma_u2
        if not np.isfinite(innovation_var) or innovation_var <= 0:
            raise FilterError(f"invalid innovation variance {innovation_var} at period {t}")
        gain = cov @ z / innovation_var
        mean = mean + gain * (observations[t] - z @ mean)
        # Joseph form
        reduce = identity - np.outer(gain, z)
        cov = reduce @ cov @ reduce.T + sigma_u2 * np.outer(gain, gain)
        cov = 0.5 * (cov + cov.T)
        filtered[t] = mean
        filtered_cov[t] = cov

    smoothed = filtered.copy()
    for t in range(n_periods - 2, -1, -1):
        smoother_gain = np.linalg.solve(predicted_cov[t + 1], filtered_cov[t]).T
        smoothed[t] = filtered[t] + smoother_gain @ (smoothed[t + 1] - filtered[t])
    if not np.isfinite(smoothed).all():
        raise FilterError("non-finite smoothed state")
    return smoothed


def path_rmse(estimated: np.ndarray, truth: np.ndarray, columns: Optional[Tuple[int, ...]] = None):
    """Root mean squared error per coefficient column."""
    columns = columns if columns is not None else tuple(range(truth.shape[1]))
    errors = estimated[:, columns] - truth[:, columns]
    return np.sqrt(np.mean(errors**2, axis=0))
