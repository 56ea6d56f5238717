"""Change of variables and Monte Carlo expectations through an invertible map.

Maps act on the last axis: ``forward`` takes an array of shape ``(..., dim)``
and returns the same shape, ``jacobian_log_abs_det`` returns shape ``(...)``.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, InvalidArgument, NonFiniteIntegrand, SingularMap
from .gauss import log_density_batch
from .rng import Rng


@dataclass(frozen=True)
class InvertibleMap:
    forward: Callable
    jacobian_log_abs_det: Callable
    dim: int


def affine_map(shift, matrix):
    """``y -> shift + matrix @ y``."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape != (shift.size, shift.size):
        raise DimensionError(f"matrix shape {matrix.shape} does not match shift length {shift.size}")
    _, logdet = np.linalg.slogdet(matrix)

    def forward(y):
        return shift + np.asarray(y, dtype=float) @ matrix.T

    def log_abs_det(y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], logdet) if y.ndim > 1 else float(logdet)

    return InvertibleMap(forward, log_abs_det, shift.size)


def diagonal_affine_map(shift, scale):
    """Elementwise ``y -> shift + scale * y``; the Gaussian reparametrisation."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    with np.errstate(divide="ignore"):
        logdet = float(np.sum(np.log(np.abs(scale))))

    def forward(y):
        return shift + scale * np.asarray(y, dtype=float)

    def log_abs_det(y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], logdet) if y.ndim > 1 else logdet

    return InvertibleMap(forward, log_abs_det, shift.size)


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_samples: int


def summarize(values):
    """Mean and standard error of a sample; ``std_error`` is inf for one value."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n < 1:
        raise InvalidArgument("cannot summarize an empty sample")
    # shifting by the first value keeps a constant sample exact
    offset = values[0]
    dev = values - offset
    value = float(offset + dev.mean())
    if n == 1:
        return McEstimate(value, math.inf, 1)
    var = float(np.var(dev, ddof=1))
    return McEstimate(value, math.sqrt(var / n), n)


def pushforward_log_density(base, fmap, y):
    """Log-density of ``z = fmap.forward(y)`` when ``y`` follows ``base``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != base.dim or fmap.dim != base.dim:
        raise DimensionError(f"point of length {y.shape[-1]}, base {base.dim}, map {fmap.dim}")
    logdet = np.asarray(fmap.jacobian_log_abs_det(y), dtype=float)
    if not np.all(np.isfinite(logdet)):
        raise SingularMap("Jacobian is singular at the queried point")
    base_ld = log_density_batch(np.atleast_2d(y), base)
    out = base_ld - np.atleast_1d(logdet)
    return float(out[0]) if y.ndim == 1 else out


def mc_expectation(f, base, fmap, n_samples, seed):
    """Estimate ``E[f(Z)]`` for ``Z = forward(Y)``, ``Y ~ base``.

    ``f`` receives the whole ``(n_samples, dim)`` batch and returns one value
    per row.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise InvalidArgument(f"n_samples must be >= 1, got {n_samples}")
    y = base.mean + Rng(seed).normal((n_samples, base.dim)) @ base.chol.T
    values = np.asarray(f(fmap.forward(y)), dtype=float).reshape(n_samples)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NonFiniteIntegrand(f"integrand is {values[idx]} at sample {idx}", index=idx)
    return summarize(values)
