import logging
import threading
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from backend.services.predictive import PredictiveDistribution

logger = logging.getLogger(__name__)

try:
    from config import FLOAT_FORMAT
except ImportError:
    import os
    FLOAT_FORMAT = os.getenv("RIDGECAST_FLOAT_FORMAT", "%.12g")


class ForecastKey(NamedTuple):
    target: str
    spec: str
    origin: pd.Period
    horizon: int

    def sort_key(self):
        return (self.target, self.spec, self.origin.ordinal, self.horizon)


class ForecastFailure(NamedTuple):
    key: ForecastKey
    error: str


class ForecastStore:
    """Append-only, thread-safe collection of predictive distributions."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: Dict[ForecastKey, PredictiveDistribution] = {}
        self._failures: Dict[ForecastKey, ForecastFailure] = {}

    def add(self, dist: PredictiveDistribution) -> ForecastKey:
        key = ForecastKey(dist.target, dist.spec_id, dist.origin, dist.horizon)
        with self._lock:
            if key in self._records:
                raise ValueError(f"Forecast already stored for {key}")
            self._records[key] = dist
        return key

    def record_failure(self, key: ForecastKey, error: Exception) -> None:
        with self._lock:
            self._failures[key] = ForecastFailure(key, f"{type(error).__name__}: {error}")
        logger.warning(f"Forecast failed for {key.target}/{key.spec} at {key.origin} h={key.horizon}: {error}")

    def get(self, target: str, spec: str, origin: pd.Period, horizon: int) -> Optional[PredictiveDistribution]:
        return self._records.get(ForecastKey(target, spec, origin, horizon))

    def __len__(self) -> int:
        return len(self._records)

    def distributions(self) -> List[PredictiveDistribution]:
        """All stored forecasts in (target, spec, origin, horizon) order."""
        with self._lock:
            keys = sorted(self._records, key=ForecastKey.sort_key)
            return [self._records[k] for k in keys]

    def failures(self) -> List[ForecastFailure]:
        with self._lock:
            return [self._failures[k] for k in sorted(self._failures, key=ForecastKey.sort_key)]

    def summary_frame(self, alphas: Sequence[float]) -> pd.DataFrame:
        """One row per forecast: mean, variance and the predictive quantile grid."""
        from backend.services.scoring import mixture_quantiles

        rows = []
        for dist in self.distributions():
            row = {
                "target": dist.target, "spec": dist.spec_id, "origin": str(dist.origin), "horizon": dist.horizon,
                "realized": np.nan if dist.realized is None else dist.realized,
                "mean": dist.mean(), "variance": dist.variance(),
                "K": dist.K, "M": dist.M, "T": dist.T, "fallback": int(dist.fallback),
            }
            for alpha, q in zip(alphas, mixture_quantiles(dist, alphas)):
                row[f"q{alpha:.2f}"] = q
            rows.append(row)
        return pd.DataFrame(rows)

    def write_forecasts(self, path: Union[str, Path], alphas: Sequence[float]) -> Path:
        path = Path(path)
        self.summary_frame(alphas).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"Wrote {len(self)} forecasts to {path}")
        return path

    def write_components(self, path: Union[str, Path]) -> Path:
        """Per-draw mixture components of every forecast (large)."""
        path = Path(path)
        frames = []
        for dist in self.distributions():
            frames.append(pd.DataFrame({
                "target": dist.target, "spec": dist.spec_id, "origin": str(dist.origin),
                "horizon": dist.horizon, "draw": np.arange(dist.n_components),
                "mean": dist.component_means, "variance": dist.component_vars,
            }))
        columns = ["target", "spec", "origin", "horizon", "draw", "mean", "variance"]
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def write_failures(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        rows = [{"target": f.key.target, "spec": f.key.spec, "origin": str(f.key.origin),
                 "horizon": f.key.horizon, "error": f.error} for f in self.failures()]
        pd.DataFrame(rows, columns=["target", "spec", "origin", "horizon", "error"]).to_csv(
            path, index=False, lineterminator="\n")
        return path
