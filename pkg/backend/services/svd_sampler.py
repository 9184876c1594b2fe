"""
SVD-based posterior computations for the ridge-shrunk survey block.

With Z = D diag(omega) S' (thin SVD, rank r = min(T, K)) the conditional
posterior of gamma under the prior N(0, sigma2 * delta * I_K) is
N(gamma_bar, sigma2 * Sigma_bar) with

    Sigma_bar = (Z'Z + I/delta)^{-1}
              = delta * (I - S diag(omega^2 / (1/delta + omega^2)) S')
    gamma_bar = S diag(omega / (1/delta + omega^2)) D' r

so every operation costs O(K r) once the factors exist.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from backend.utils.errors import DesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of the survey block: Z' = S diag(omega) D'."""
    S: np.ndarray      # K x r, orthonormal columns
    omega: np.ndarray  # r, descending, >= 0
    D: np.ndarray      # T x r, orthonormal columns

    @property
    def K(self) -> int:
        return self.S.shape[0]

    @property
    def T(self) -> int:
        return self.D.shape[0]

    @property
    def rank(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class GammaPosteriorSpec:
    residual: np.ndarray
    sigma2: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive, got {self.delta}")


def thin_svd(Z: np.ndarray) -> SvdFactors:
    """Thin SVD of a T x K matrix, computed once per design."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise DesignError(f"Z must be a non-empty T x K matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise DesignError("Z contains non-finite entries")
    U, omega, Vt = np.linalg.svd(Z, full_matrices=False)
    return SvdFactors(S=Vt.T.copy(), omega=omega, D=U)


def _shrunk(f: SvdFactors, delta: float) -> np.ndarray:
    """1/delta + omega^2, with omega^2 clipped at zero."""
    omega2 = np.clip(f.omega * f.omega, 0.0, None)
    return 1.0 / delta + omega2


def posterior_mean(f: SvdFactors, spec: GammaPosteriorSpec) -> np.ndarray:
    residual = np.asarray(spec.residual, dtype=float)
    if residual.shape != (f.T,):
        raise ValueError(f"residual has shape {residual.shape}, expected ({f.T},)")
    weights = f.omega / _shrunk(f, spec.delta)
    return f.S @ (weights * (f.D.T @ residual))


def posterior_covariance_apply(f: SvdFactors, delta: float, v: np.ndarray) -> np.ndarray:
    """Sigma_bar @ v without forming the K x K matrix."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != f.K:
        raise ValueError(f"v has leading dimension {v.shape[0]}, expected {f.K}")
    omega2 = np.clip(f.omega * f.omega, 0.0, None)
    ratio = omega2 / _shrunk(f, delta)
    proj = f.S.T @ v
    if v.ndim == 2:
        return delta * (v - f.S @ (ratio[:, None] * proj))
    return delta * (v - f.S @ (ratio * proj))


def sample_gamma(f: SvdFactors, spec: GammaPosteriorSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(gamma_bar, sigma2 * Sigma_bar).

    Sigma_bar splits into delta on the complement of span(S) and
    diag(1 / (1/delta + omega^2)) inside it, so a prior draw a ~ N(0, delta I_K)
    supplies the complement and an r-dimensional standard normal the span.
    """
    gamma_bar = posterior_mean(f, spec)
    a = rng.standard_normal(f.K) * np.sqrt(spec.delta)
    xi = rng.standard_normal(f.rank)
    complement = a - f.S @ (f.S.T @ a)
    within = f.S @ (xi / np.sqrt(_shrunk(f, spec.delta)))
    return gamma_bar + np.sqrt(spec.sigma2) * (complement + within)


def dense_posterior(Z: np.ndarray, residual: np.ndarray, delta: float):
    """Reference (gamma_bar, Sigma_bar) by direct K x K inversion."""
    Z = np.asarray(Z, dtype=float)
    K = Z.shape[1]
    precision = Z.T @ Z + np.eye(K) / delta
    chol = linalg.cho_factor(precision, lower=True)
    mean = linalg.cho_solve(chol, Z.T @ np.asarray(residual, dtype=float))
    cov = linalg.cho_solve(chol, np.eye(K))
    return mean, cov


def sample_gamma_dense(Z: np.ndarray, spec: GammaPosteriorSpec, rng: np.random.Generator) -> np.ndarray:
    """Reference sampler: Cholesky of the K x K posterior precision, O(K^3)."""
    Z = np.asarray(Z, dtype=float)
    K = Z.shape[1]
    precision = Z.T @ Z + np.eye(K) / spec.delta
    L = linalg.cholesky(precision, lower=True)
    mean = linalg.cho_solve((L, True), Z.T @ np.asarray(spec.residual, dtype=float))
    # L L' = P  =>  solve(L', e) ~ N(0, P^{-1})
    noise = linalg.solve_triangular(L.T, rng.standard_normal(K), lower=False)
    return mean + np.sqrt(spec.sigma2) * noise
