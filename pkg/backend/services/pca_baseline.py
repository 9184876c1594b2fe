"""
Factor-augmented comparator: principal components of the survey block enter X.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from backend.services.model import RegressionDesign
from backend.utils.errors import DesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactorSet:
    loadings: np.ndarray            # K x F
    factors: np.ndarray             # T x F
    explained_variance: np.ndarray  # F, descending
    center: np.ndarray              # K, training column means
    total_variance: float

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_share(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance


def extract_pcs(Z: np.ndarray, F: int) -> FactorSet:
    """First ``F`` principal components of the T x K matrix ``Z``.

    Each factor's largest-magnitude loading is made positive.

    Raises:
        DesignError: F outside 1..min(T, K).
    """
    Z = np.asarray(Z, dtype=float)
    T, K = Z.shape
    if not 1 <= F <= min(T, K):
        raise DesignError(f"Factor count F={F} outside 1..{min(T, K)} for a {T}x{K} survey block")
    center = Z.mean(axis=0)
    U, s, Vt = np.linalg.svd(Z - center, full_matrices=False)
    loadings = Vt[:F].T.copy()
    factors = U[:, :F] * s[:F]

    for j in range(F):
        if loadings[np.argmax(np.abs(loadings[:, j])), j] < 0:
            loadings[:, j] *= -1.0
            factors[:, j] *= -1.0

    denom = max(T - 1, 1)
    return FactorSet(loadings=loadings, factors=factors, explained_variance=s[:F] ** 2 / denom,
                     center=center, total_variance=float(np.sum(s ** 2) / denom))


def project(factor_set: FactorSet, z_rows: np.ndarray) -> np.ndarray:
    """Factor values for new Z rows on the fixed training loadings."""
    z_rows = np.asarray(z_rows, dtype=float)
    return (z_rows - factor_set.center) @ factor_set.loadings


def pca_design(design: RegressionDesign, F: int) -> RegressionDesign:
    """Move the survey block into X as ``F`` factors; the result has K = 0.

    F = 0 gives the benchmark design.
    """
    benchmark = replace(design, Z=np.empty((design.T, 0)), z_columns=[], z_new=np.empty(0))
    if F == 0:
        return benchmark
    if design.K == 0:
        raise DesignError(f"PCA design for {design.target} at {design.origin} needs survey columns")
    fs = extract_pcs(design.Z, F)
    logger.debug(f"PCA at {design.origin}: {F} factors explain {fs.explained_share.sum():.1%} of the survey block")
    return replace(
        benchmark,
        X=np.column_stack([design.X, fs.factors]),
        x_columns=list(design.x_columns) + [f"pc{j + 1}" for j in range(F)],
        x_new=np.concatenate([design.x_new, project(fs, design.z_new)]),
    )
