"""Multivariate Gaussian primitives built on a lower-triangular Cholesky factor."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, InvalidArgument, NotPositiveDefinite
from .rng import Rng

LOG_2PI = float(np.log(2.0 * np.pi))
SYMMETRY_ATOL = 1e-12
PIVOT_RTOL = 1e-12


def cholesky(cov):
    """Lower Cholesky factor of ``cov``.

    Raises :class:`NotPositiveDefinite` when the matrix is not symmetric to
    1e-12 or any squared pivot falls below 1e-12 times the largest diagonal
    entry.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefinite("covariance has non-finite entries")
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_ATOL:
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"factorization failed: {exc}") from None
    pivots = np.diag(chol) ** 2
    floor = PIVOT_RTOL * np.max(np.diag(cov))
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(f"pivot {pivots.min():.3g} below tolerance {floor:.3g}")
    return chol


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean vector and SPD covariance; the factor is computed once on creation."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise DimensionError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", cholesky(cov))

    @property
    def dim(self):
        return self.mean.size

    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def precision(self):
        inv_chol = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        return inv_chol.T @ inv_chol


def standard_normal(dim):
    return GaussianParams(np.zeros(dim), np.eye(dim))


def log_density_batch(X, g):
    """Log-density of every row of ``X`` (shape ``(N, n_x)``) under ``g``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != g.dim:
        raise DimensionError(f"points of shape {X.shape} do not match dimension {g.dim}")
    white = solve_triangular(g.chol, (X - g.mean).T, lower=True)
    maha = np.sum(white * white, axis=0)
    return -0.5 * (g.dim * LOG_2PI + g.log_det() + maha)


def log_density(x, g):
    """Log-density of a single point ``x`` under ``g``.

    >>> round(log_density([0.0, 0.0], standard_normal(2)), 6)
    -1.837877
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != g.dim:
        raise DimensionError(f"point of length {x.size} does not match dimension {g.dim}")
    return float(log_density_batch(x[None, :], g)[0])


def sample_gaussian(g, count, seed):
    """Draw ``count`` points ``mean + L @ eps``; returns an array ``(count, n_x)``."""
    if int(count) < 1:
        raise InvalidArgument(f"count must be >= 1, got {count}")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    eps = rng.normal((int(count), g.dim))
    return g.mean + eps @ g.chol.T


def sigma_ellipse(g, n_points=100):
    """Points of the 1-sigma contour of a 2-D Gaussian, shape ``(n_points, 2)``."""
    if g.dim != 2:
        raise DimensionError(f"sigma ellipse needs a 2-D Gaussian, got dimension {g.dim}")
    if int(n_points) < 3:
        raise InvalidArgument(f"n_points must be >= 3, got {n_points}")
    theta = 2.0 * np.pi * np.arange(int(n_points)) / int(n_points)
    circle = np.stack([np.cos(theta), np.sin(theta)])
    return (g.mean[:, None] + g.chol @ circle).T
