"""GLS-based time-varying AR(q) estimation.

Observation rows ``x_t = a_0t + sum_l a_lt x_{t-l}`` and random-walk penalty
rows ``0 = a_lt - a_l,t-1`` are stacked into one weighted least-squares
problem whose normal equations are banded. The system is solved with a banded
Cholesky factorisation; a shared (constant) intercept becomes a single border
row and column that is eliminated through its Schur complement.
"""
import logging
import re
import warnings
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import attr
import numpy as np
import pandas as pd
from scipy import sparse
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.optimize import minimize
from scipy.stats import norm

from tvamh.errors import InsufficientDataError, NonConvergenceWarning, SingularSystemError
from tvamh.timeseries import ReturnSeries

logger = logging.getLogger(__name__)

MIN_LAMBDA = 1e-6
MAX_LAMBDA = 1e8
CONDITION_LIMIT = 1e12


class InterceptDynamics(str, Enum):
    RANDOM_WALK = "random_walk"
    CONSTANT = "constant"


class VarianceRatioMode(str, Enum):
    FIXED = "fixed"
    FEASIBLE_GLS = "feasible_gls"


def _optional_lambda(value) -> Optional[Tuple[float, ...]]:
    if value is None:
        return None
    return tuple(float(v) for v in np.atleast_1d(np.asarray(value, dtype=float)))


@attr.frozen
class TvarConfig:
    q: int = attr.field(default=1, converter=int)
    intercept_dynamics: InterceptDynamics = attr.field(
        default=InterceptDynamics.RANDOM_WALK,
        converter=InterceptDynamics,
    )
    variance_ratio_mode: VarianceRatioMode = attr.field(
        default=VarianceRatioMode.FEASIBLE_GLS,
        converter=VarianceRatioMode,
    )
    lam: Optional[Tuple[float, ...]] = attr.field(default=None, converter=_optional_lambda)
    fgls_max_iter: int = attr.field(default=100, converter=int)
    fgls_tol: float = attr.field(default=1e-8, converter=float)
    pooled_state_variance: bool = False

    def __attrs_post_init__(self):
        if self.q < 1:
            raise ValueError(f"lag order q must be at least 1, got {self.q}")
        if self.fgls_tol <= 0:
            raise ValueError(f"fgls_tol must be positive, got {self.fgls_tol}")
        if self.fgls_max_iter < 1:
            raise ValueError(f"fgls_max_iter must be at least 1, got {self.fgls_max_iter}")
        if self.variance_ratio_mode is VarianceRatioMode.FIXED:
            if self.lam is None:
                raise ValueError("fixed variance ratio mode needs a lambda")
            if len(self.lam) not in (1, self.n_random_walk):
                raise ValueError(
                    f"expected 1 or {self.n_random_walk} lambda values, got {len(self.lam)}",
                )
            if min(self.lam) < 0 or not np.isfinite(self.lam).all():
                raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")

    @classmethod
    def fixed(cls, q: int, lam: Union[float, Sequence[float]], **kwargs) -> "TvarConfig":
        return cls(q=q, variance_ratio_mode=VarianceRatioMode.FIXED, lam=lam, **kwargs)

    @property
    def n_coef(self) -> int:
        return self.q + 1

    @property
    def random_walk_columns(self) -> Tuple[int, ...]:
        first = 0 if self.intercept_dynamics is InterceptDynamics.RANDOM_WALK else 1
        return tuple(range(first, self.q + 1))

    @property
    def n_random_walk(self) -> int:
        return len(self.random_walk_columns)


@attr.frozen
class VarianceWeights:
    sigma_u2: float = attr.field(converter=float)
    sigma_v2: np.ndarray = attr.field(converter=lambda v: np.atleast_1d(np.asarray(v, float)))

    @classmethod
    def unit(cls, cfg: TvarConfig) -> "VarianceWeights":
        return cls(1.0, np.ones(cfg.n_random_walk))

    @classmethod
    def from_lambda(cls, cfg: TvarConfig, lam, sigma_u2: float = 1.0) -> "VarianceWeights":
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (cfg.n_random_walk,))
        with np.errstate(divide="ignore"):
            return cls(sigma_u2, sigma_u2 / lam)


def regressor_matrix(values: np.ndarray, q: int) -> np.ndarray:
    """Rows ``(1, x_{t-1}, ..., x_{t-q})`` for ``t = q..n-1``."""
    n = len(values)
    lags = [values[q - lag : n - lag] for lag in range(1, q + 1)]
    return np.column_stack([np.ones(n - q)] + lags)


def _column_index(n_periods: int, cfg: TvarConfig) -> np.ndarray:
    """Unknown index of coefficient ``l`` at period ``t`` (periods outermost)."""
    k = cfg.n_coef
    if cfg.intercept_dynamics is InterceptDynamics.RANDOM_WALK:
        return np.arange(n_periods * k).reshape(n_periods, k)
    columns = np.empty((n_periods, k), dtype=int)
    columns[:, 0] = n_periods * cfg.q
    columns[:, 1:] = np.arange(n_periods * cfg.q).reshape(n_periods, cfg.q)
    return columns


@attr.frozen(eq=False)
class StackedSystem:
    design: sparse.csr_matrix
    response: np.ndarray
    weights: np.ndarray
    regressors: np.ndarray
    config: TvarConfig
    variances: VarianceWeights

    @property
    def n_periods(self) -> int:
        return self.regressors.shape[0]

    @property
    def n_penalty_rows(self) -> int:
        return self.design.shape[0] - self.n_periods

    @property
    def n_unknowns(self) -> int:
        return self.design.shape[1]

    @property
    def has_border(self) -> bool:
        return self.config.intercept_dynamics is InterceptDynamics.CONSTANT

    def normal_equations(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        weighted = sparse.diags(self.weights) @ self.design
        matrix = (self.design.T @ weighted).tocsr()
        rhs = self.design.T @ (self.weights * self.response)
        return matrix, rhs

    def bandwidth(self) -> int:
        """Half-bandwidth of the normal matrix, shared-intercept border excluded."""
        matrix, _ = self.normal_equations()
        rows, cols = matrix.nonzero()
        if self.has_border:
            inner = (rows < self.n_unknowns - 1) & (cols < self.n_unknowns - 1)
            rows, cols = rows[inner], cols[inner]
        return int(np.abs(rows - cols).max()) if len(rows) else 0

    def unpack(self, solution: np.ndarray) -> np.ndarray:
        return solution[_column_index(self.n_periods, self.config)]

    def locate(self, unknown: int) -> Tuple[int, int]:
        """(period, coefficient) of an unknown index."""
        columns = _column_index(self.n_periods, self.config)
        period, coef = np.argwhere(columns == unknown)[0]
        return int(period), int(coef)


def build_stacked_system(
    returns: ReturnSeries,
    cfg: TvarConfig,
    weights: Optional[VarianceWeights] = None,
) -> StackedSystem:
    q = cfg.q
    values = returns.values
    if len(values) <= 2 * q + 1:
        raise InsufficientDataError(
            f"{returns.asset_id}: TV-AR({q}) needs more than {2 * q + 1} returns, "
            f"got {len(values)}",
        )
    weights = weights or VarianceWeights.unit(cfg)

    regressors = regressor_matrix(values, q)
    n_periods, k = regressors.shape
    columns = _column_index(n_periods, cfg)
    n_unknowns = int(columns.max()) + 1

    rows = [np.repeat(np.arange(n_periods), k)]
    cols = [columns.ravel()]
    data = [regressors.ravel()]
    row_weights = [np.full(n_periods, 1.0 / weights.sigma_u2)]
    offset = n_periods
    for series, coef in enumerate(cfg.random_walk_columns):
        penalty_rows = offset + np.arange(n_periods - 1)
        rows += [penalty_rows, penalty_rows]
        cols += [columns[1:, coef], columns[:-1, coef]]
        data += [np.ones(n_periods - 1), -np.ones(n_periods - 1)]
        with np.errstate(divide="ignore"):
            row_weights.append(np.full(n_periods - 1, 1.0 / weights.sigma_v2[series]))
        offset += n_periods - 1

    design = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, n_unknowns),
    ).tocsr()
    response = np.concatenate([values[q:], np.zeros(offset - n_periods)])
    return StackedSystem(
        design,
        response,
        np.concatenate(row_weights),
        regressors,
        cfg,
        weights,
    )


def _lower_banded(matrix: sparse.spmatrix, bandwidth: int) -> np.ndarray:
    size = matrix.shape[0]
    bands = np.zeros((bandwidth + 1, size))
    for offset in range(bandwidth + 1):
        bands[offset, : size - offset] = matrix.diagonal(-offset)
    return bands


class _BandedNormalSolver:
    """Banded Cholesky of the normal equations, with optional intercept border."""

    def __init__(self, system: StackedSystem, check_condition: bool = True):
        self.system = system
        matrix, self.rhs = system.normal_equations()
        if system.has_border:
            self.border = matrix[:-1, -1].toarray().ravel()
            self.corner = float(matrix[-1, -1])
            matrix = matrix[:-1, :-1]
        bandwidth = system.config.n_coef if not system.has_border else system.config.q
        try:
            self.factor = cholesky_banded(_lower_banded(matrix, bandwidth), lower=True)
        except LinAlgError as exc:
            match = re.search(r"\d+", str(exc))
            unknown = int(match.group()) - 1 if match else 0
            period, coef = system.locate(unknown)
            raise SingularSystemError(
                f"normal equations not positive definite at period {period}, "
                f"coefficient {coef} ({exc})",
            ) from exc

        pivots = self.factor[0] ** 2
        if system.has_border:
            self.border_solution = self._solve_inner(self.border)
            self.schur = self.corner - self.border @ self.border_solution
            pivots = np.append(pivots, self.schur)
        smallest = int(np.argmin(pivots))
        condition = np.inf if pivots[smallest] <= 0 else pivots.max() / pivots[smallest]
        if pivots[smallest] <= 0 or (check_condition and condition > CONDITION_LIMIT):
            period, coef = system.locate(smallest)
            raise SingularSystemError(
                f"near-singular normal equations (condition estimate {condition:.3g}) "
                f"at period {period}, coefficient {coef}",
            )
        self.condition = condition
        self.pivots = pivots

    def _solve_inner(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.factor, True), rhs)

    def log_determinant(self) -> float:
        return float(np.sum(np.log(self.pivots)))

    def solve(self) -> np.ndarray:
        if not self.system.has_border:
            return self._solve_inner(self.rhs)
        inner = self._solve_inner(self.rhs[:-1])
        intercept = (self.rhs[-1] - self.border @ inner) / self.schur
        return np.append(inner - self.border_solution * intercept, intercept)


def solve_stacked_system(system: StackedSystem, method: str = "banded") -> np.ndarray:
    """Coefficient paths (periods x coefficients) solving the weighted normal equations.

    ``method="dense"`` runs a dense direct solve and only exists for cross-checks.
    """
    if method == "dense":
        matrix, rhs = system.normal_equations()
        return system.unpack(np.linalg.solve(matrix.toarray(), rhs))
    if method != "banded":
        raise ValueError(f"unknown method {method!r}")
    return system.unpack(_BandedNormalSolver(system).solve())


def _block_tridiagonal_inverse(
    diagonal: np.ndarray,
    coupling: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and first off-diagonal blocks of the inverse of an SPD block-tridiagonal matrix.

    ``diagonal`` has shape (T, b, b); every off-diagonal block equals ``coupling``.
    ``cross[t]`` is the (t, t+1) block of the inverse.
    """
    n_periods, size = diagonal.shape[:2]
    schur_inv = np.empty_like(diagonal)
    schur_inv[0] = np.linalg.inv(diagonal[0])
    for t in range(1, n_periods):
        schur = diagonal[t] - coupling.T @ schur_inv[t - 1] @ coupling
        schur_inv[t] = np.linalg.inv(schur)
    blocks = np.empty_like(diagonal)
    cross = np.empty((n_periods - 1, size, size))
    blocks[-1] = schur_inv[-1]
    for t in range(n_periods - 2, -1, -1):
        gain = schur_inv[t] @ coupling
        cross[t] = -gain @ blocks[t + 1]
        blocks[t] = schur_inv[t] + gain @ blocks[t + 1] @ gain.T
    return blocks, cross


def _posterior_blocks(
    system: StackedSystem,
    solver: Optional[_BandedNormalSolver] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-period (q+1)x(q+1) blocks of the inverse weighted normal matrix.

    Returns the diagonal blocks and the lag-one cross blocks ``cov(a_t, a_t+1)``.
    """
    cfg, weights, regressors = system.config, system.variances, system.regressors
    n_periods, k = regressors.shape
    w_u = 1.0 / weights.sigma_u2
    w_v = np.zeros(k)
    w_v[list(cfg.random_walk_columns)] = 1.0 / weights.sigma_v2
    neighbours = np.full(n_periods, 2.0)
    neighbours[[0, -1]] = 1.0

    if not system.has_border:
        diagonal = w_u * regressors[:, :, None] * regressors[:, None, :]
        diagonal += neighbours[:, None, None] * np.diag(w_v)[None]
        blocks, cross = _block_tridiagonal_inverse(diagonal, -np.diag(w_v))
    else:
        slopes = regressors[:, 1:]
        diagonal = w_u * slopes[:, :, None] * slopes[:, None, :]
        diagonal += neighbours[:, None, None] * np.diag(w_v[1:])[None]
        inner, inner_cross = _block_tridiagonal_inverse(diagonal, -np.diag(w_v[1:]))
        # shared intercept: rank-one Schur correction of the slope blocks
        solver = solver or _BandedNormalSolver(system)
        gain = solver.border_solution.reshape(n_periods, cfg.q)
        schur = solver.schur
        blocks = np.empty((n_periods, k, k))
        blocks[:, 0, 0] = 1.0 / schur
        blocks[:, 1:, 0] = -gain / schur
        blocks[:, 0, 1:] = -gain / schur
        blocks[:, 1:, 1:] = inner + gain[:, :, None] * gain[:, None, :] / schur
        cross = np.empty((n_periods - 1, k, k))
        cross[:, 0, 0] = 1.0 / schur
        cross[:, 1:, 0] = -gain[:-1] / schur
        cross[:, 0, 1:] = -gain[1:] / schur
        cross[:, 1:, 1:] = inner_cross + gain[:-1, :, None] * gain[1:, None, :] / schur
    return 0.5 * (blocks + np.swapaxes(blocks, 1, 2)), cross


def _covariance_blocks(system: StackedSystem) -> np.ndarray:
    return _posterior_blocks(system)[0]


@attr.frozen(eq=False)
class TvarFit:
    asset_id: str
    dates: pd.DatetimeIndex = attr.field(converter=pd.DatetimeIndex)
    response: np.ndarray
    regressors: np.ndarray
    coef_paths: np.ndarray
    residuals: np.ndarray
    coef_cov: Optional[np.ndarray]
    sigma_u2: float
    sigma_v2: np.ndarray
    lambda_used: np.ndarray
    config: TvarConfig
    converged: bool = True
    iterations: int = 1

    @property
    def n_periods(self) -> int:
        return self.coef_paths.shape[0]

    def standard_errors(self) -> np.ndarray:
        if self.coef_cov is None:
            raise ValueError("fit was computed without coefficient covariance")
        variances = np.diagonal(self.coef_cov, axis1=1, axis2=2)
        return np.sqrt(np.clip(variances, 0.0, None))


def _residuals(response: np.ndarray, regressors: np.ndarray, coef: np.ndarray) -> np.ndarray:
    return response - np.einsum("tk,tk->t", regressors, coef)


def _solve(
    returns: ReturnSeries,
    cfg: TvarConfig,
    weights: VarianceWeights,
    check_condition: bool = True,
):
    system = build_stacked_system(returns, cfg, weights)
    solver = _BandedNormalSolver(system, check_condition)
    return system, solver, system.unpack(solver.solve())


def _roughness(coef: np.ndarray, cfg: TvarConfig) -> np.ndarray:
    """Squared first differences of each random-walk path, summed over periods."""
    return np.sum(np.diff(coef[:, list(cfg.random_walk_columns)], axis=0) ** 2, axis=0)


def _profile_variance(system: StackedSystem, coef: np.ndarray, lam: np.ndarray) -> float:
    """Observation variance maximising the restricted likelihood at ratios ``lam``."""
    residuals = _residuals(system.response[: system.n_periods], system.regressors, coef)
    penalised = residuals @ residuals + lam @ _roughness(coef, system.config)
    return max(float(penalised) / (system.n_periods - system.config.n_coef), 1e-300)


@attr.frozen(eq=False)
class RestrictedDeviance:
    """-2 log restricted likelihood at fixed smoothing ratios, ``sigma_u^2`` profiled out.

    ``gradient`` is taken with respect to ``log lambda``. Of the ``T - 1``
    difference directions of path ``l`` only ``determined[l]`` are pinned down by
    the data; the gradient vanishes where ``sigma_u^2 / lambda_l`` equals the
    path roughness over that count.
    """

    value: float
    gradient: np.ndarray
    sigma_u2: float
    roughness: np.ndarray
    determined: np.ndarray
    coef_paths: np.ndarray


def restricted_deviance(
    returns: ReturnSeries,
    cfg: TvarConfig,
    lam: Union[float, Sequence[float]],
    check_condition: bool = True,
) -> RestrictedDeviance:
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (cfg.n_random_walk,))
    if (lam <= 0).any():
        raise ValueError(f"smoothing ratios must be positive, got {lam}")
    weights = VarianceWeights.from_lambda(cfg, lam)
    system, solver, coef = _solve(returns, cfg, weights, check_condition)
    n_periods, dof = system.n_periods, system.n_periods - cfg.n_coef

    columns = list(cfg.random_walk_columns)
    blocks, cross = _posterior_blocks(system, solver)
    variances = np.diagonal(blocks, axis1=1, axis2=2)[:, columns]
    covariances = np.diagonal(cross, axis1=1, axis2=2)[:, columns]
    spread = (variances[1:] + variances[:-1] - 2.0 * covariances).sum(axis=0)
    determined = (n_periods - 1) - lam * spread

    roughness = _roughness(coef, cfg)
    residuals = _residuals(system.response[:n_periods], system.regressors, coef)
    penalised = max(float(residuals @ residuals + lam @ roughness), 1e-300)
    sigma_u2 = penalised / dof
    value = (
        dof * np.log(penalised)
        - (n_periods - 1) * np.sum(np.log(lam))
        + solver.log_determinant()
    )
    gradient = lam * roughness / sigma_u2 - determined
    return RestrictedDeviance(value, gradient, sigma_u2, roughness, determined, coef)


def _feasible_lambda(returns: ReturnSeries, cfg: TvarConfig):
    """Smoothing ratios minimising the restricted deviance, searched in ``log lambda``."""
    n_free = 1 if cfg.pooled_state_variance else cfg.n_random_walk

    def objective(log_lam: np.ndarray):
        deviance = restricted_deviance(returns, cfg, np.exp(log_lam), check_condition=False)
        gradient = deviance.gradient
        if cfg.pooled_state_variance:
            gradient = gradient.sum(keepdims=True)
        return deviance.value, gradient

    result = minimize(
        objective,
        np.zeros(n_free),
        jac=True,
        method="L-BFGS-B",
        bounds=[(np.log(MIN_LAMBDA), np.log(MAX_LAMBDA))] * n_free,
        options={"maxiter": cfg.fgls_max_iter, "ftol": cfg.fgls_tol},
    )
    lam = np.broadcast_to(np.exp(result.x), (cfg.n_random_walk,))
    logger.debug("feasible GLS: %s after %d iterations, lambda %s", result.message, result.nit, lam)
    return np.clip(lam, MIN_LAMBDA, MAX_LAMBDA), bool(result.success), int(result.nit)


def fit_tvar(
    returns: ReturnSeries,
    cfg: TvarConfig = TvarConfig(),
    with_covariance: bool = True,
) -> TvarFit:
    """Fit the TV-AR(q) by weighted least squares over the stacked system.

    Under feasible GLS every smoothing ratio starts at one. Each iteration
    solves the weighted system, re-estimates the variances from the observation
    and penalty residuals together with the posterior spread of the paths, and
    moves the ratios towards the restricted-likelihood optimum; the search stops
    once the relative change of :func:`restricted_deviance` falls below ``fgls_tol``.
    """
    converged = True
    iterations = 1
    if cfg.variance_ratio_mode is VarianceRatioMode.FIXED:
        lam = np.broadcast_to(np.asarray(cfg.lam, dtype=float), (cfg.n_random_walk,))
        system, _, coef = _solve(returns, cfg, VarianceWeights.from_lambda(cfg, lam))
        residuals = _residuals(system.response[: system.n_periods], system.regressors, coef)
        # the solution depends on lambda only; rescale to the residual variance
        sigma_u2 = float(np.mean(residuals**2))
        weights = VarianceWeights.from_lambda(cfg, lam, sigma_u2)
    else:
        lam, converged, iterations = _feasible_lambda(returns, cfg)
        system, _, coef = _solve(returns, cfg, VarianceWeights.from_lambda(cfg, lam))
        weights = VarianceWeights.from_lambda(cfg, lam, _profile_variance(system, coef, lam))
        if not converged:
            warnings.warn(
                f"{returns.asset_id}: feasible GLS stopped after {iterations} iterations "
                "without converging; returning the last iterate",
                NonConvergenceWarning,
            )

    residuals = _residuals(system.response[: system.n_periods], system.regressors, coef)
    coef_cov = None
    if with_covariance:
        coef_cov = _covariance_blocks(build_stacked_system(returns, cfg, weights))
    with np.errstate(divide="ignore"):
        lambda_used = weights.sigma_u2 / weights.sigma_v2
    return TvarFit(
        asset_id=returns.asset_id,
        dates=returns.dates[cfg.q :],
        response=system.response[: system.n_periods],
        regressors=system.regressors,
        coef_paths=coef,
        residuals=residuals,
        coef_cov=coef_cov,
        sigma_u2=weights.sigma_u2,
        sigma_v2=weights.sigma_v2,
        lambda_used=lambda_used,
        config=cfg,
        converged=converged,
        iterations=iterations,
    )


@attr.frozen(eq=False)
class CoefficientBands:
    level: float
    lower: np.ndarray
    upper: np.ndarray


def coefficient_bands(fit: TvarFit, level: float = 0.95) -> CoefficientBands:
    """Pointwise Gaussian intervals from the per-period covariance blocks."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    half_width = norm.ppf((1.0 + level) / 2.0) * fit.standard_errors()
    return CoefficientBands(level, fit.coef_paths - half_width, fit.coef_paths + half_width)


def psi_weights(ar_coefs: np.ndarray, horizon: int) -> np.ndarray:
    """Moving-average weights psi_0..psi_horizon of a stationary AR polynomial."""
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    ar_coefs = np.asarray(ar_coefs, dtype=float)
    psi = np.zeros(horizon + 1)
    psi[0] = 1.0
    for h in range(1, horizon + 1):
        order = min(h, len(ar_coefs))
        psi[h] = ar_coefs[:order] @ psi[h - 1 :: -1][:order]
    return psi


def impulse_response(fit: TvarFit, t: int, horizon: int) -> np.ndarray:
    """Impulse response of the period-``t`` coefficients frozen as a local AR(q)."""
    if not 0 <= t < fit.n_periods:
        raise IndexError(f"period {t} outside fit range 0..{fit.n_periods - 1}")
    return psi_weights(fit.coef_paths[t, 1:], horizon)
