"""Mahalanobis-squared-distance split metric.

For a training block ``X`` (n_x rows) and test block ``Y`` (n_y rows) sharing
the pooled covariance ``S``::

    d_xy   = mean_i (x_i - mean(Y))' S^-1 (x_i - mean(Y))
    d_yx   = mean_j (y_j - mean(X))' S^-1 (y_j - mean(X))
    lambda = (d_xy + d_yx) / 2

``S`` is Cholesky-factorized once and the factor is reused for every row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

# Ridge multipliers (relative to trace(S)/d) tried when S is not numerically SPD.
RIDGE_LADDER = (1e-10, 1e-8, 1e-6)


class DegenerateDataError(ValueError):
    """The pooled covariance is singular beyond repair (e.g. a constant column)."""


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class LambdaStatistic:
    d_xy: float
    d_yx: float
    lam: float
    dim: int
    regularization_used: float = 0.0


@dataclass(frozen=True)
class CovarianceFactor:
    """Lower Cholesky factor of an SPD matrix plus the ridge added to reach it."""

    lower: np.ndarray
    ridge: float = 0.0

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    def whiten(self, centered: np.ndarray) -> np.ndarray:
        """Solve L z = v for each row v of ``centered``; returns rows of z."""
        return linalg.solve_triangular(self.lower, centered.T, lower=True, check_finite=False).T


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def moments(m) -> MomentSummary:
    """Column means and unbiased (n - 1) sample covariance."""
    m = _as_matrix(m)
    n = m.shape[0]
    if n < 2:
        raise ValueError(f"moments need at least 2 rows, got {n}")
    mean = m.mean(axis=0)
    centered = m - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2
    return MomentSummary(mean=mean, cov=cov, count=n)


def pooled_covariance(a: MomentSummary, b: MomentSummary) -> np.ndarray:
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    total = a.count + b.count
    if total < 3:
        raise ValueError("pooled covariance needs n_x + n_y >= 3")
    return ((a.count - 1) * a.cov + (b.count - 1) * b.cov) / (total - 2)


def factorize(sigma: np.ndarray) -> CovarianceFactor:
    """Cholesky-factorize ``sigma``, escalating a diagonal ridge on failure.

    Raises :class:`DegenerateDataError` when a column has zero variance or the
    largest ridge on the ladder still leaves the matrix indefinite.
    """
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    diag = np.diag(sigma)
    scale = float(np.trace(sigma)) / d
    if not np.all(np.isfinite(sigma)) or scale <= 0 or np.any(diag <= 0):
        raise DegenerateDataError(
            "pooled covariance has a zero-variance direction (constant column?)"
        )
    try:
        return CovarianceFactor(linalg.cholesky(sigma, lower=True, check_finite=False))
    except linalg.LinAlgError:
        pass
    for mult in RIDGE_LADDER:
        ridge = mult * scale
        try:
            lower = linalg.cholesky(sigma + ridge * np.eye(d), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        return CovarianceFactor(lower, ridge)
    raise DegenerateDataError(
        f"pooled covariance is singular even with ridge {RIDGE_LADDER[-1]:g}*trace/d"
    )


def mahalanobis_sq(x, mu, factor: CovarianceFactor) -> float:
    """(x - mu)' S^-1 (x - mu) using the Cholesky factor of S."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if x.shape != mu.shape or x.shape[0] != factor.d:
        raise ValueError(f"dimension mismatch: x {x.shape}, mu {mu.shape}, factor {factor.d}")
    z = linalg.solve_triangular(factor.lower, x - mu, lower=True, check_finite=False)
    return float(z @ z)


def mean_mahalanobis_sq(rows: np.ndarray, mu: np.ndarray, factor: CovarianceFactor) -> float:
    z = factor.whiten(rows - mu)
    return float(np.einsum("ij,ij->", z, z)) / rows.shape[0]


def lambda_metric(train, test) -> LambdaStatistic:
    """Distance metric between a training block and a test block.

    Parameters
    ----------
    train, test : array_like
        ``n_x x d`` and ``n_y x d`` matrices over the same columns.

    Returns
    -------
    LambdaStatistic
        Both directional mean distances, their average and the ridge that
        was needed to factorize the pooled covariance (0 when none).
    """
    x = _as_matrix(train)
    y = _as_matrix(test)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: train d={x.shape[1]}, test d={y.shape[1]}")
    mx, my = moments(x), moments(y)
    factor = factorize(pooled_covariance(mx, my))
    d_xy = mean_mahalanobis_sq(x, my.mean, factor)
    d_yx = mean_mahalanobis_sq(y, mx.mean, factor)
    return LambdaStatistic(
        d_xy=d_xy,
        d_yx=d_yx,
        lam=(d_xy + d_yx) / 2,
        dim=x.shape[1],
        regularization_used=factor.ridge,
    )


def lambda_from_mask(block: np.ndarray, train_mask: np.ndarray) -> LambdaStatistic:
    return lambda_metric(block[train_mask], block[~train_mask])
