import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictiveDistribution:
    """Equally weighted Gaussian mixture on the target's original scale."""
    origin: pd.Period
    horizon: int
    target: str
    component_means: np.ndarray
    component_vars: np.ndarray
    realized: Optional[float] = None
    spec_id: str = "benchmark"
    fallback: bool = False
    K: int = 0
    M: int = 0
    T: int = 0

    def __post_init__(self):
        means = np.asarray(self.component_means, dtype=float).reshape(-1)
        variances = np.asarray(self.component_vars, dtype=float).reshape(-1)
        if means.shape != variances.shape or means.size == 0:
            raise ValueError("component means and variances must be non-empty and of equal length")
        if not np.all(variances > 0):
            raise ValueError("component variances must be strictly positive")
        object.__setattr__(self, "component_means", means)
        object.__setattr__(self, "component_vars", variances)

    @property
    def n_components(self) -> int:
        return self.component_means.size

    @property
    def target_period(self) -> pd.Period:
        return self.origin + self.horizon

    def mean(self) -> float:
        return float(np.mean(self.component_means))

    def variance(self) -> float:
        """Law of total variance over the mixture components."""
        return float(np.mean(self.component_vars) + np.var(self.component_means))

    def with_realized(self, value: Optional[float]) -> "PredictiveDistribution":
        if value is not None and not np.isfinite(value):
            value = None
        return replace(self, realized=None if value is None else float(value))
