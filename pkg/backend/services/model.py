"""
Bayesian predictive regression y = X beta + Z gamma + eps, eps ~ N(0, sigma2).

beta (intercept, target lags, core predictors) gets a Horseshoe prior with the
intercept left unpenalized; gamma (the survey block, K >> T) gets the ridge
prior N(0, sigma2 * delta * I_K) with 1/delta ~ Gamma(c0, c1). The gamma step
runs through the SVD sampler so a sweep costs O(K T).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from backend.config import (
    HORSESHOE_SCALE,
    INTERCEPT_VAR,
    MCMC_BURN,
    MCMC_RETAIN,
    MCMC_THIN,
    PRIOR_C0,
    PRIOR_C1,
    SIGMA2_RATE,
    SIGMA2_SHAPE,
    SURVEY_LAGS,
    TARGET_LAGS,
)
from backend.ingestion.panel import PanelDataset, Role, StandardizationStats, VariableMeta, standardize
from backend.services.predictive import PredictiveDistribution
from backend.services.svd_sampler import GammaPosteriorSpec, sample_gamma, thin_svd
from backend.utils.errors import DesignError, SamplerError

logger = logging.getLogger(__name__)

try:
    from config import FLOAT_FORMAT
except ImportError:
    import os
    FLOAT_FORMAT = os.getenv("RIDGECAST_FLOAT_FORMAT", "%.12g")

SCALE_FLOOR = 1e-12
SCALE_CEILING = 1e12
INTERCEPT = "intercept"


class PriorConfig(BaseModel):
    """Hyperparameters of the ridge, Horseshoe and error-variance priors."""
    model_config = ConfigDict(frozen=True)

    c0: float = Field(default=PRIOR_C0, gt=0)
    c1: float = Field(default=PRIOR_C1, gt=0)
    sigma2_shape: float = Field(default=SIGMA2_SHAPE, gt=0)
    sigma2_rate: float = Field(default=SIGMA2_RATE, gt=0)
    horseshoe_scale: float = Field(default=HORSESHOE_SCALE, gt=0)
    intercept_var: float = Field(default=INTERCEPT_VAR, gt=0)
    fixed_delta: Optional[float] = Field(default=None, gt=0)


class McmcConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    burn: int = Field(default=MCMC_BURN, ge=0)
    retain: int = Field(default=MCMC_RETAIN, ge=1)
    thin: int = Field(default=MCMC_THIN, ge=1)

    @property
    def iterations(self) -> int:
        return self.burn + self.retain * self.thin


@dataclass(frozen=True)
class RegressionDesign:
    """Standardized (y, X, Z) for one target, horizon and forecast origin.

    Row t of X and Z holds information dated t; y[t] is the target at t + horizon.
    The first ``n_unpenalized`` columns of X (the intercept) skip the Horseshoe.
    """
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    horizon: int
    stats: StandardizationStats
    target: str
    response_key: str
    x_columns: List[str]
    z_columns: List[str]
    periods: pd.PeriodIndex
    x_new: np.ndarray
    z_new: np.ndarray
    origin: pd.Period
    n_unpenalized: int = 1
    fallback: bool = False

    def __post_init__(self):
        T = self.y.shape[0]
        if self.X.shape != (T, len(self.x_columns)) or self.Z.shape != (T, len(self.z_columns)):
            raise DesignError("design blocks and column labels disagree")
        if self.x_new.shape != (self.M,) or self.z_new.shape != (self.K,):
            raise DesignError("origin row does not match the design width")
        if self.M < 1:
            raise DesignError("X needs at least one column")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained Gibbs draws, one row per draw."""
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    x_columns: List[str] = field(default_factory=list)
    z_columns: List[str] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.sigma2.shape[0]


@dataclass
class HorseshoeState:
    lam2: np.ndarray
    nu: np.ndarray
    tau2: float
    xi: float

    @classmethod
    def initial(cls, n_penalized: int) -> "HorseshoeState":
        return cls(lam2=np.ones(n_penalized), nu=np.ones(n_penalized), tau2=1.0, xi=1.0)


def lag_column(variable_id: str, lag: int) -> str:
    return f"{variable_id}@L{lag}"


def lead_column(variable_id: str, horizon: int) -> str:
    return f"{variable_id}@F{horizon}"


def lag_panel(data: PanelDataset, target: str, core_ids: Sequence[str], survey_ids: Sequence[str],
              horizon: int, target_lags: Sequence[int] = TARGET_LAGS,
              survey_lags: Sequence[int] = SURVEY_LAGS) -> Tuple[PanelDataset, str, List[str], List[str]]:
    """Lagged regressors and the h-step lead of the target on the same monthly index.

    Survey variable v contributes ``survey_lags[:lags]`` columns.

    Returns:
        (lagged panel, response column, X columns, Z columns)
    """
    frame = data.frame
    columns: Dict[str, pd.Series] = {}
    meta: Dict[str, VariableMeta] = {}

    response = lead_column(target, horizon)
    columns[response] = frame[target].shift(-horizon)
    meta[response] = data.meta[target].model_copy(update={"name": response})

    x_cols: List[str] = []
    for lag in target_lags:
        col = lag_column(target, lag)
        columns[col] = frame[target].shift(lag)
        meta[col] = VariableMeta(name=col, role=Role.CORE_PREDICTOR)
        x_cols.append(col)
    for core in core_ids:
        col = lag_column(core, 0)
        columns[col] = frame[core]
        meta[col] = data.meta[core].model_copy(update={"name": col})
        x_cols.append(col)

    z_cols: List[str] = []
    for var_id in survey_ids:
        for lag in list(survey_lags)[:data.meta[var_id].lags]:
            col = lag_column(var_id, lag)
            columns[col] = frame[var_id].shift(lag)
            meta[col] = data.meta[var_id].model_copy(update={"name": col})
            z_cols.append(col)

    lagged = pd.DataFrame(columns, index=frame.index, columns=list(columns))
    return PanelDataset(frame=lagged, meta=meta), response, x_cols, z_cols


def _earliest_origin(data: PanelDataset, target: str, core_ids: Sequence[str], horizon: int,
                     target_lags: Sequence[int], start: pd.Period, min_rows: int) -> Optional[pd.Period]:
    frame = data.frame.loc[data.frame.index >= start]
    parts = [frame[target].shift(lag) for lag in target_lags] + [frame[c] for c in core_ids]
    parts.append(frame[target].shift(-horizon))
    usable = np.flatnonzero(pd.concat(parts, axis=1).notna().all(axis=1).to_numpy())
    if usable.size < min_rows:
        return None
    return frame.index[usable[min_rows - 1]] + horizon


def build_design(data: PanelDataset, target: str, survey_ids: Sequence[str], horizon: int,
                 window: Tuple[pd.Period, pd.Period], survey_lags: Sequence[int] = SURVEY_LAGS,
                 target_lags: Sequence[int] = TARGET_LAGS) -> RegressionDesign:
    """Build the direct h-step design with information up to ``window[1]`` (the forecast origin).

    The panel is cut at the origin, lagged, then standardized over the
    training rows. Survey columns with gaps in the training rows or at the
    origin are dropped; if none survive, the design falls back to the
    benchmark and records the fact.

    Raises:
        DesignError: unknown ids, horizon < 1, or too few usable rows.
    """
    if horizon < 1:
        raise DesignError(f"horizon must be >= 1, got {horizon}")
    survey_ids = list(dict.fromkeys(survey_ids))
    unknown = [v for v in [target, *survey_ids] if v not in data.meta]
    if unknown:
        raise DesignError(f"Unknown variable ids: {', '.join(unknown)}")
    if data.meta[target].role != Role.TARGET:
        raise DesignError(f"'{target}' is not a target variable")
    not_survey = [v for v in survey_ids if data.meta[v].role != Role.SURVEY]
    if not_survey:
        raise DesignError(f"Not survey variables: {', '.join(not_survey)}")

    start, origin = window
    if origin not in data.time_index:
        raise DesignError(f"Origin {origin} is outside the panel {data.time_index[0]}..{data.time_index[-1]}")
    core_ids = data.ids_with_role(Role.CORE_PREDICTOR)

    lagged, response, x_cols, z_cols = lag_panel(data.window(start, origin), target, core_ids, survey_ids,
                                                 horizon, target_lags, survey_lags)
    frame = lagged.frame
    rows = np.flatnonzero(frame[[response] + x_cols].notna().all(axis=1).to_numpy())
    min_rows = len(x_cols) + 2
    if rows.size < min_rows:
        earliest = _earliest_origin(data, target, core_ids, horizon, target_lags, start, min_rows)
        raise DesignError(
            f"Window {start}..{origin} gives {rows.size} usable rows for {target} at h={horizon}; "
            f"need {min_rows}" + (f" (earliest feasible origin {earliest})" if earliest is not None else ""),
            earliest_feasible_origin=earliest,
        )

    std_panel, stats = standardize(lagged, (frame.index[rows[0]], frame.index[rows[-1]]))
    if response not in std_panel.meta:
        raise DesignError(f"{target} is constant over the training window ending {origin}")
    x_cols = [c for c in x_cols if c in std_panel.meta]
    std = std_panel.frame

    origin_x = std.loc[origin, x_cols].to_numpy(dtype=float)
    if not np.all(np.isfinite(origin_x)):
        missing = [c for c, v in zip(x_cols, origin_x) if not np.isfinite(v)]
        raise DesignError(f"Predictors missing at origin {origin}: {', '.join(missing)}")

    z_kept = []
    for col in z_cols:
        if col not in std_panel.meta:
            continue
        values = std[col].to_numpy(dtype=float)
        if np.all(np.isfinite(values[rows])) and np.isfinite(std.at[origin, col]):
            z_kept.append(col)
        else:
            logger.warning(f"Dropping survey column {col}: missing values in the training rows or at {origin}")
    fallback = bool(survey_ids) and not z_kept
    if fallback:
        logger.warning(f"No survey columns left for {target} at {origin}; falling back to the benchmark design")

    used = [response] + x_cols + z_kept
    stats = StandardizationStats(mean={c: stats.mean[c] for c in used}, std={c: stats.std[c] for c in used})
    T = rows.size
    y = std[response].to_numpy(dtype=float)[rows]
    X = np.column_stack([np.ones(T), std[x_cols].to_numpy(dtype=float)[rows]])
    Z = std[z_kept].to_numpy(dtype=float)[rows] if z_kept else np.empty((T, 0))
    z_new = std.loc[origin, z_kept].to_numpy(dtype=float) if z_kept else np.empty(0)

    return RegressionDesign(
        y=y, X=X, Z=Z, horizon=horizon, stats=stats, target=target, response_key=response,
        x_columns=[INTERCEPT] + x_cols, z_columns=z_kept, periods=frame.index[rows],
        x_new=np.concatenate([[1.0], origin_x]), z_new=z_new, origin=origin, fallback=fallback,
    )


def _inverse_gamma(shape, rate, rng: np.random.Generator):
    """Draw from IG(shape, rate) as rate / Gamma(shape, 1)."""
    return np.asarray(rate, dtype=float) / rng.gamma(shape, 1.0, size=np.shape(rate))


def sample_delta_inverse(gamma: np.ndarray, sigma2: float, prior: PriorConfig, rng: np.random.Generator,
                         size: Optional[int] = None):
    """1/delta | gamma, sigma2 ~ Gamma(c0 + K/2, rate c1 + gamma'gamma / (2 sigma2))."""
    gamma = np.asarray(gamma, dtype=float)
    shape = prior.c0 + 0.5 * gamma.size
    rate = prior.c1 + float(gamma @ gamma) / (2.0 * sigma2)
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_horseshoe_scales(beta_penalized: np.ndarray, state: HorseshoeState, prior: PriorConfig,
                            rng: np.random.Generator) -> HorseshoeState:
    """One sweep of the auxiliary-variable Horseshoe conditionals.

    Every conditional is inverse-Gamma: locals lambda_j^2 and their
    auxiliaries nu_j with shape 1, the global tau^2 with shape (M + 1) / 2,
    and its auxiliary xi with shape 1 (half-Cauchy scale ``horseshoe_scale``).
    """
    b2 = np.asarray(beta_penalized, dtype=float) ** 2
    m = b2.size
    if m == 0:
        return state
    lam2 = _inverse_gamma(1.0, 1.0 / state.nu + b2 / (2.0 * state.tau2), rng)
    lam2 = np.clip(lam2, SCALE_FLOOR, SCALE_CEILING)
    nu = np.clip(_inverse_gamma(1.0, 1.0 + 1.0 / lam2, rng), SCALE_FLOOR, SCALE_CEILING)
    tau2 = float(_inverse_gamma(0.5 * (m + 1), 1.0 / state.xi + float(np.sum(b2 / lam2)) / 2.0, rng))
    tau2 = float(np.clip(tau2, SCALE_FLOOR, SCALE_CEILING))
    xi = float(_inverse_gamma(1.0, 1.0 / prior.horseshoe_scale ** 2 + 1.0 / tau2, rng))
    xi = float(np.clip(xi, SCALE_FLOOR, SCALE_CEILING))
    return HorseshoeState(lam2=lam2, nu=nu, tau2=tau2, xi=xi)


def _sample_beta(X: np.ndarray, target: np.ndarray, sigma2: float, prior_var: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    precision = X.T @ X / sigma2 + np.diag(1.0 / prior_var)
    L = linalg.cholesky(precision, lower=True)
    mean = linalg.cho_solve((L, True), X.T @ target / sigma2)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(X.shape[1]), lower=False)


def gibbs_run(design: RegressionDesign, prior: PriorConfig, mcmc: McmcConfig,
              rng: np.random.Generator) -> PosteriorDraws:
    """Run the Gibbs sampler and return the retained draws.

    Sweep order: beta, Horseshoe scales, gamma, sigma2, delta.

    Raises:
        SamplerError: a conditional produced non-finite values.
    """
    y, X, Z = design.y, design.X, design.Z
    T, M, K = design.T, design.M, design.K
    n_free = min(design.n_unpenalized, M)
    factors = thin_svd(Z) if K > 0 else None

    beta = np.zeros(M)
    gamma = np.zeros(K)
    sigma2 = 1.0
    delta = prior.fixed_delta if prior.fixed_delta is not None else prior.c1 / prior.c0
    hs = HorseshoeState.initial(M - n_free)
    prior_var = np.empty(M)
    prior_var[:n_free] = prior.intercept_var

    n_keep = mcmc.retain
    out_beta = np.empty((n_keep, M))
    out_gamma = np.empty((n_keep, K))
    out_sigma2 = np.empty(n_keep)
    out_delta = np.empty(n_keep)
    out_lam = np.empty((n_keep, M))
    out_lam[:, :n_free] = np.sqrt(prior.intercept_var)
    out_tau = np.empty(n_keep)

    logger.debug(f"Gibbs run for {design.target} at {design.origin}: T={T}, M={M}, K={K}, "
                 f"{mcmc.iterations} iterations")
    kept = 0
    try:
        for it in range(mcmc.iterations):
            z_gamma = Z @ gamma if K > 0 else 0.0
            prior_var[n_free:] = hs.lam2 * hs.tau2
            beta = _sample_beta(X, y - z_gamma, sigma2, prior_var, rng)
            hs = sample_horseshoe_scales(beta[n_free:], hs, prior, rng)

            resid = y - X @ beta
            if factors is not None:
                gamma = sample_gamma(factors, GammaPosteriorSpec(resid, sigma2, delta), rng)
                resid = resid - Z @ gamma

            gg = float(gamma @ gamma)
            sigma2 = float(_inverse_gamma(prior.sigma2_shape + 0.5 * (T + K),
                                          prior.sigma2_rate + 0.5 * float(resid @ resid) + gg / (2.0 * delta), rng))
            if prior.fixed_delta is None:
                delta = 1.0 / float(sample_delta_inverse(gamma, sigma2, prior, rng))

            if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))
                    and np.isfinite(sigma2) and np.isfinite(delta) and sigma2 > 0 and delta > 0):
                raise SamplerError("non-finite or non-positive draw", iteration=it)

            if it >= mcmc.burn and (it - mcmc.burn + 1) % mcmc.thin == 0:
                out_beta[kept] = beta
                out_gamma[kept] = gamma
                out_sigma2[kept] = sigma2
                out_delta[kept] = delta
                out_lam[kept, n_free:] = np.sqrt(hs.lam2)
                out_tau[kept] = np.sqrt(hs.tau2)
                kept += 1
    except linalg.LinAlgError as e:
        raise SamplerError(f"beta conditional is not positive definite: {e}", iteration=it) from e
    except ValueError as e:
        # scipy refuses non-finite inputs before factorizing
        raise SamplerError(f"non-finite values in a conditional: {e}", iteration=it) from e

    return PosteriorDraws(beta=out_beta, gamma=out_gamma, sigma2=out_sigma2, delta=out_delta,
                          lam=out_lam, tau=out_tau, x_columns=list(design.x_columns),
                          z_columns=list(design.z_columns))


def predict(draws: PosteriorDraws, x_new: np.ndarray, z_new: np.ndarray, stats: StandardizationStats,
            response_key: str, origin: pd.Period, horizon: int, target: str,
            spec_id: str = "benchmark", fallback: bool = False, T: int = 0) -> PredictiveDistribution:
    """Mixture of N(x'beta_i + z'gamma_i, sigma2_i) over draws, on the target's original scale."""
    x_new = np.asarray(x_new, dtype=float)
    z_new = np.asarray(z_new, dtype=float)
    if x_new.shape != (draws.beta.shape[1],) or z_new.shape != (draws.gamma.shape[1],):
        raise ValueError(f"origin row dims ({x_new.size}, {z_new.size}) do not match draws "
                         f"({draws.beta.shape[1]}, {draws.gamma.shape[1]})")
    mu = draws.beta @ x_new
    if z_new.size:
        mu = mu + draws.gamma @ z_new
    scale = stats.std[response_key]
    return PredictiveDistribution(
        origin=origin, horizon=horizon, target=target,
        component_means=stats.invert(response_key, mu),
        component_vars=draws.sigma2 * scale ** 2,
        spec_id=spec_id, fallback=fallback, K=z_new.size, M=x_new.size, T=T,
    )


def forecast(design: RegressionDesign, draws: PosteriorDraws, spec_id: str = "benchmark") -> PredictiveDistribution:
    return predict(draws, design.x_new, design.z_new, design.stats, design.response_key, design.origin,
                   design.horizon, design.target, spec_id=spec_id, fallback=design.fallback, T=design.T)


def export_draws(draws: PosteriorDraws, path: Union[str, Path]) -> Path:
    """Write draws as one CSV row per draw, columns prefixed by parameter block."""
    path = Path(path)
    x_names = draws.x_columns or [str(j) for j in range(draws.beta.shape[1])]
    z_names = draws.z_columns or [str(j) for j in range(draws.gamma.shape[1])]
    blocks = [
        pd.DataFrame(draws.beta, columns=[f"beta_{n}" for n in x_names]),
        pd.DataFrame(draws.gamma, columns=[f"gamma_{n}" for n in z_names]),
        pd.DataFrame(draws.lam, columns=[f"lambda_{n}" for n in x_names]),
        pd.DataFrame({"sigma2": draws.sigma2, "delta": draws.delta, "tau": draws.tau}),
    ]
    frame = pd.concat(blocks, axis=1)
    frame.index.name = "draw"
    frame.to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Exported {draws.n_draws} draws to {path}")
    return path
