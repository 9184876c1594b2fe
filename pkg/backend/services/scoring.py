"""
Forecast evaluation: squared error, log predictive likelihood, quantile scores
and quantile-weighted CRPS, plus their aggregation into relative gains.

Scores live in a ScorePanel: a tidy DataFrame with one row per
(target, spec, origin, horizon).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import logsumexp

from backend.config import QUANTILE_J, QUANTILE_TOL
from backend.services.predictive import PredictiveDistribution
from backend.utils.errors import ScoringError

logger = logging.getLogger(__name__)

SCORE_KEYS = ["target", "spec", "origin", "horizon"]
BENCHMARK = "benchmark"
LOSS_METRICS = ("mse", "qs", "crps_left", "crps_right", "crps_tails")
METRICS = LOSS_METRICS + ("lpl", "pl_ratio")

WEIGHTS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "left": lambda a: (1.0 - a) ** 2,
    "right": lambda a: a ** 2,
    "tails": lambda a: (2.0 * a - 1.0) ** 2,
}


@dataclass(frozen=True)
class QuantileGrid:
    J: int = QUANTILE_J

    def __post_init__(self):
        if self.J < 2:
            raise ValueError("quantile grid needs J >= 2")

    @property
    def alphas(self) -> np.ndarray:
        return np.arange(1, self.J) / self.J


def qs_column(alpha: float) -> str:
    return f"qs_{alpha:.2f}"


def _require_realized(dist: PredictiveDistribution) -> float:
    if dist.realized is None:
        raise ScoringError(f"No realized value for {dist.target}/{dist.spec_id} at {dist.origin} h={dist.horizon}")
    return dist.realized


def mixture_cdf(dist: PredictiveDistribution, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sd = np.sqrt(dist.component_vars)
    return stats.norm.cdf((x[:, None] - dist.component_means[None, :]) / sd[None, :]).mean(axis=1)


def mixture_quantiles(dist: PredictiveDistribution, alphas: Sequence[float],
                      tol: float = QUANTILE_TOL, max_iter: int = 200) -> np.ndarray:
    """Quantiles of the mixture by bisection on its CDF, all alphas at once.

    Stops when every CDF value is within ``tol`` of its alpha or the bracket
    can no longer shrink in floating point.
    """
    alphas = np.asarray(alphas, dtype=float)
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ScoringError("quantile levels must lie strictly between 0 and 1")
    sd = np.sqrt(dist.component_vars)
    lo = np.full(alphas.shape, np.min(dist.component_means - 12.0 * sd))
    hi = np.full(alphas.shape, np.max(dist.component_means + 12.0 * sd))
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        cdf = mixture_cdf(dist, mid)
        done = (np.abs(cdf - alphas) <= tol) | (mid <= lo) | (mid >= hi)
        if np.all(done):
            break
        below = cdf < alphas
        lo = np.where(~done & below, mid, lo)
        hi = np.where(~done & ~below, mid, hi)
    return mid


def point_error(dist: PredictiveDistribution) -> float:
    realized = _require_realized(dist)
    return (dist.mean() - realized) ** 2


def log_pred_likelihood(dist: PredictiveDistribution) -> float:
    """log of the equally weighted mixture density at the realized value."""
    realized = _require_realized(dist)
    log_dens = stats.norm.logpdf(realized, loc=dist.component_means, scale=np.sqrt(dist.component_vars))
    return float(logsumexp(log_dens) - np.log(dist.n_components))


def qs_from_quantile(quantile, alpha, realized):
    quantile = np.asarray(quantile, dtype=float)
    indicator = (realized <= quantile).astype(float)
    return 2.0 * (indicator - alpha) * (quantile - realized)


def quantile_score(dist: PredictiveDistribution, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ScoringError(f"alpha must lie in (0, 1), got {alpha}")
    realized = _require_realized(dist)
    q = mixture_quantiles(dist, [alpha])[0]
    return float(qs_from_quantile(q, alpha, realized))


def crps_from_qs(qs: np.ndarray, alphas: np.ndarray, weight: str) -> float:
    """(1/(J-1)) * sum_j QS(alpha_j) w(alpha_j)."""
    if weight not in WEIGHTS:
        raise ScoringError(f"Unknown weight '{weight}'. Available: {', '.join(WEIGHTS)}")
    alphas = np.asarray(alphas, dtype=float)
    return float(np.sum(np.asarray(qs, dtype=float) * WEIGHTS[weight](alphas)) / alphas.size)


def weighted_crps(dist: PredictiveDistribution, weight: str, grid: QuantileGrid = QuantileGrid()) -> float:
    realized = _require_realized(dist)
    alphas = grid.alphas
    qs = qs_from_quantile(mixture_quantiles(dist, alphas), alphas, realized)
    return crps_from_qs(qs, alphas, weight)


def score_distribution(dist: PredictiveDistribution, grid: QuantileGrid = QuantileGrid()) -> Dict[str, object]:
    realized = _require_realized(dist)
    alphas = grid.alphas
    qs = qs_from_quantile(mixture_quantiles(dist, alphas), alphas, realized)
    row: Dict[str, object] = {
        "target": dist.target, "spec": dist.spec_id, "origin": str(dist.origin), "horizon": dist.horizon,
        "se": point_error(dist), "lpl": log_pred_likelihood(dist),
    }
    row.update({qs_column(a): float(q) for a, q in zip(alphas, qs)})
    for weight in WEIGHTS:
        row[f"crps_{weight}"] = crps_from_qs(qs, alphas, weight)
    return row


def score_forecasts(dists: Iterable[PredictiveDistribution], grid: QuantileGrid = QuantileGrid()) -> pd.DataFrame:
    """ScorePanel for every forecast with a realized value."""
    rows, skipped = [], 0
    for dist in dists:
        if dist.realized is None:
            skipped += 1
            continue
        rows.append(score_distribution(dist, grid))
    if skipped:
        logger.info(f"Skipped {skipped} forecasts without realized values")
    columns = SCORE_KEYS + ["se", "lpl"] + [qs_column(a) for a in grid.alphas] + [f"crps_{w}" for w in WEIGHTS]
    panel = pd.DataFrame(rows, columns=columns)
    return panel.sort_values(SCORE_KEYS, kind="mergesort").reset_index(drop=True)


def qs_columns(scores: pd.DataFrame) -> List[str]:
    return [c for c in scores.columns if c.startswith("qs_")]


def aggregate(scores: pd.DataFrame) -> pd.DataFrame:
    """Mean losses and summed LPL per (target, spec, horizon)."""
    frame = scores.copy()
    frame["qs"] = frame[qs_columns(scores)].mean(axis=1)
    grouped = frame.groupby(["target", "spec", "horizon"], sort=True)
    out = grouped.agg(
        mse=("se", "mean"), qs=("qs", "mean"), crps_left=("crps_left", "mean"),
        crps_right=("crps_right", "mean"), crps_tails=("crps_tails", "mean"),
        lpl=("lpl", "sum"), n_origins=("origin", "count"),
    )
    return out.reset_index()


def relative_gain(scores_model: float, scores_bench: float) -> float:
    """-(model / bench - 1) in percent; positive means the model loses less."""
    if scores_bench == 0 or not np.isfinite(scores_bench):
        raise ScoringError("benchmark aggregate is zero or non-finite")
    return -(scores_model / scores_bench - 1.0) * 100.0 + 0.0


def lpl_gain(lpl_model: Sequence[float], lpl_bench: Sequence[float]) -> Tuple[float, float]:
    """Summed LPL difference (model - bench) and the predictive likelihood ratio exp(mean difference)."""
    diff = np.asarray(lpl_model, dtype=float) - np.asarray(lpl_bench, dtype=float)
    if diff.size == 0:
        raise ScoringError("no common origins for the LPL comparison")
    return float(diff.sum()), float(np.exp(diff.mean()))


def _paired(scores: pd.DataFrame, target: str, spec: str, horizon: int,
            benchmark: str = BENCHMARK) -> Tuple[pd.DataFrame, pd.DataFrame]:
    sel = scores[(scores["target"] == target) & (scores["horizon"] == horizon)]
    model = sel[sel["spec"] == spec].set_index("origin").sort_index()
    bench = sel[sel["spec"] == benchmark].set_index("origin").sort_index()
    if bench.empty:
        raise ScoringError(f"No benchmark records for {target} at h={horizon}")
    if model.empty:
        raise ScoringError(f"No records for {target}/{spec} at h={horizon}")
    common = model.index.intersection(bench.index)
    return model.loc[common], bench.loc[common]


def metric_gain(scores: pd.DataFrame, target: str, spec: str, horizon: int, metric: str,
                benchmark: str = BENCHMARK) -> float:
    """Gain of ``spec`` over the benchmark on their common origins (higher is better)."""
    if metric not in METRICS:
        raise ScoringError(f"Unknown metric '{metric}'. Available: {', '.join(METRICS)}")
    model, bench = _paired(scores, target, spec, horizon, benchmark)
    if metric in ("lpl", "pl_ratio"):
        total, ratio = lpl_gain(model["lpl"], bench["lpl"])
        return total if metric == "lpl" else ratio
    if metric == "mse":
        return relative_gain(model["se"].mean(), bench["se"].mean())
    if metric == "qs":
        cols = qs_columns(scores)
        return relative_gain(model[cols].to_numpy().mean(), bench[cols].to_numpy().mean())
    return relative_gain(model[metric].mean(), bench[metric].mean())


def gain_table(scores: pd.DataFrame, metrics: Sequence[str] = METRICS, benchmark: str = BENCHMARK) -> pd.DataFrame:
    """Long table of gains for every (target, horizon, spec, metric)."""
    rows = []
    for (target, horizon), group in scores.groupby(["target", "horizon"], sort=True):
        if benchmark not in set(group["spec"]):
            raise ScoringError(f"No benchmark records for {target} at h={horizon}")
        for spec in sorted(set(group["spec"])):
            for metric in metrics:
                rows.append({"target": target, "horizon": int(horizon), "spec": spec, "metric": metric,
                             "gain": metric_gain(scores, target, spec, int(horizon), metric, benchmark)})
    return pd.DataFrame(rows, columns=["target", "horizon", "spec", "metric", "gain"])


def cumulative_lpl(scores: pd.DataFrame, target: str, spec: str, horizon: int,
                   benchmark: str = BENCHMARK) -> pd.DataFrame:
    """Running LPL sum over origins, and the same relative to the benchmark's running sum."""
    model, bench = _paired(scores, target, spec, horizon, benchmark)
    cum_model = model["lpl"].cumsum()
    cum_bench = bench["lpl"].cumsum()
    return pd.DataFrame({"cum_lpl": cum_model, "cum_lpl_benchmark": cum_bench,
                         "relative": cum_model - cum_bench})
