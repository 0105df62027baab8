"""Feature-space separation: region statistics and the Fréchet distance.

The squared Fréchet distance between two Gaussian summaries is

    d2 = ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)

with both matrix square roots computed by the coupled Newton-Schulz
iteration, which needs only matrix products and converges quadratically
for the normalized SPD matrices produced by region_stats.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateRegionError,
    ParameterError,
    ShapeError,
)
from .features import FeatureMap, region_cells

COVARIANCE_EPS_SCALE = 1e-6
_EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class RegionStats:
    """Gaussian summary of the feature vectors inside one region.

    sigma already includes the trace-scaled ridge that keeps it
    positive definite; n is the number of grid cells pooled.
    """

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def stats_from_vectors(vectors: np.ndarray) -> RegionStats:
    """Mean and regularized covariance of row vectors.

    The ridge is 1e-6 * trace/D (floored at a tiny absolute value so
    identical samples still yield a positive definite sigma).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ShapeError(f"expected (n, D) sample matrix, got shape {vectors.shape}")
    n, dim = vectors.shape
    if n < 2:
        raise DegenerateRegionError(
            f"need at least 2 samples for a covariance, got {n}"
        )
    mu = vectors.mean(axis=0)
    centered = vectors - mu
    sigma = (centered.T @ centered) / (n - 1)
    eps = max(COVARIANCE_EPS_SCALE * float(np.trace(sigma)) / dim, _EPS_FLOOR)
    sigma = sigma + eps * np.eye(dim)
    return RegionStats(mu=mu, sigma=sigma, n=n)


def region_stats(fm: FeatureMap, region: np.ndarray) -> RegionStats:
    """Pool the feature cells whose pixel blocks majority-vote into region."""
    selected, _ = region_cells(fm, region)
    n = int(selected.sum())
    if n < 2:
        raise DegenerateRegionError(
            f"region covers {n} feature cells, need at least 2"
        )
    return stats_from_vectors(fm.vectors[selected])


def few_sample_warning(stats: RegionStats, label: str) -> str | None:
    """Covariance estimates below D+1 samples are rank deficient."""
    if stats.n < stats.dim + 1:
        return (
            f"few-samples: {label} region has {stats.n} cells for "
            f"{stats.dim}-dimensional statistics"
        )
    return None


def matrix_sqrt(
    a: np.ndarray, iterations: int = 100, tol: float = 1e-10
) -> tuple[np.ndarray, int, float]:
    """Principal square root by coupled Newton-Schulz iteration.

    Normalizes A by its Frobenius norm, iterates Y_{k+1} = Y_k T_k,
    Z_{k+1} = T_k Z_k with T_k = (3 I - Z_k Y_k) / 2 from Y_0 = A',
    Z_0 = I, and stops early once ||Y Y - A'||_F / ||A'||_F < tol.
    Returns (sqrt, iterations used, final relative residual).  The
    residual growing three times in a row raises ConvergenceError,
    which flags indefinite input.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"matrix_sqrt expects a square matrix, got {a.shape}")
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros_like(a), 0, 0.0
    if float(np.linalg.norm(a - a.T)) > 1e-8 * norm:
        raise ParameterError("matrix_sqrt input is not symmetric")

    a_n = a / norm
    y = a_n.copy()
    z = np.eye(a.shape[0])
    identity3 = 3.0 * np.eye(a.shape[0])
    residual = float(np.linalg.norm(y @ y - a_n))
    if residual < tol:
        return np.sqrt(norm) * y, 0, residual
    grew = 0
    used = 0
    for k in range(1, iterations + 1):
        t = 0.5 * (identity3 - z @ y)
        y = y @ t
        z = t @ z
        used = k
        new_residual = float(np.linalg.norm(y @ y - a_n))
        grew = grew + 1 if new_residual > residual else 0
        if not np.isfinite(new_residual) or grew >= 3:
            raise ConvergenceError(
                f"square root iteration diverged at step {k}; "
                "input is likely not positive semi-definite"
            )
        residual = new_residual
        if residual < tol:
            break
    return np.sqrt(norm) * y, used, residual


def matrix_sqrt_eig(a: np.ndarray) -> np.ndarray:
    """Reference square root via eigendecomposition (V sqrt(L) V^T)."""
    vals, vecs = np.linalg.eigh(np.asarray(a, dtype=np.float64))
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


@dataclass(frozen=True)
class FrechetResult:
    d2: float
    mean_term: float
    cov_term: float
    sqrt_iterations: int
    sqrt_residual: float
    warnings: tuple[str, ...] = ()


def frechet_distance(
    s1: RegionStats, s2: RegionStats, iterations: int = 100
) -> FrechetResult:
    """Squared Fréchet distance between two region summaries."""
    if s1.dim != s2.dim:
        raise ShapeError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    mean_term = float(((s1.mu - s2.mu) ** 2).sum())
    root1, it1, res1 = matrix_sqrt(s1.sigma, iterations=iterations)
    inner = root1 @ s2.sigma @ root1
    inner = 0.5 * (inner + inner.T)  # exact symmetry for the next root
    cross, it2, res2 = matrix_sqrt(inner, iterations=iterations)
    cov_term = float(np.trace(s1.sigma) + np.trace(s2.sigma) - 2.0 * np.trace(cross))
    d2 = mean_term + cov_term
    warnings: tuple[str, ...] = ()
    if d2 < 0.0:
        if d2 < -1e-8:
            warnings = (f"negative-distance: d2 = {d2:.3e} clamped to 0",)
        d2 = 0.0
    return FrechetResult(
        d2=d2,
        mean_term=mean_term,
        cov_term=cov_term,
        sqrt_iterations=it1 + it2,
        sqrt_residual=max(res1, res2),
        warnings=warnings,
    )
