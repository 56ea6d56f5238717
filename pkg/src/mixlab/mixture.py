"""Gaussian mixture models fitted by expectation-maximisation."""

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateData,
    DegenerateResponsibility,
    DimensionError,
    EmptyComponent,
    InvalidArgument,
)
from .gauss import GaussianParams, log_density_batch
from .rng import Rng

WEIGHT_SUM_ATOL = 1e-12
EMPTY_COMPONENT_RTOL = 1e-10
REGULARIZATION_SCALE = 1e-6


@dataclass(frozen=True, eq=False)
class MixtureParams:
    weights: np.ndarray
    components: Sequence[GaussianParams]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        components = tuple(self.components)
        if weights.ndim != 1 or weights.size != len(components) or not components:
            raise DimensionError(f"{weights.size} weights for {len(components)} components")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_SUM_ATOL:
            raise InvalidArgument(f"weights must be non-negative and sum to 1, got {weights}")
        if len({c.dim for c in components}) != 1:
            raise DimensionError("components have different dimensions")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @classmethod
    def from_arrays(cls, weights, means, covs):
        return cls(weights, [GaussianParams(m, c) for m, c in zip(means, covs)])

    @property
    def k(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def means(self):
        return np.stack([c.mean for c in self.components])

    @property
    def covs(self):
        return np.stack([c.cov for c in self.components])

    def permuted(self, order):
        order = list(order)
        return MixtureParams(self.weights[order], [self.components[i] for i in order])


@dataclass(frozen=True)
class StoppingRule:
    max_passes: int = 50
    loglik_tol: float = 1e-3

    def __post_init__(self):
        if self.max_passes < 1:
            raise InvalidArgument("max_passes must be >= 1")
        if not self.loglik_tol > 0:
            raise InvalidArgument("loglik_tol must be positive")


@dataclass
class EmPass:
    index: int
    params: MixtureParams
    loglik: float


@dataclass
class EmTrace:
    """Pass 0 holds the initial parameters; passes 1.. follow each M-step."""

    passes: List[EmPass] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def final(self):
        return self.passes[-1]

    @property
    def n_passes(self):
        return self.passes[-1].index

    @property
    def logliks(self):
        return np.array([p.loglik for p in self.passes])


def _as_data(X, dim=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument(f"data must be a non-empty (N, n_x) array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise DimensionError(f"data dimension {X.shape[1]} does not match parameters ({dim})")
    return X


def log_joint(X, theta):
    """Matrix ``log pi_k + log N(x_n; mu_k, P_k)`` of shape ``(N, K)``."""
    X = _as_data(X, theta.dim)
    with np.errstate(divide="ignore"):
        log_w = np.log(theta.weights)
    cols = [log_density_batch(X, c) for c in theta.components]
    return np.stack(cols, axis=1) + log_w


def mixture_log_likelihood(X, theta):
    return float(np.sum(logsumexp(log_joint(X, theta), axis=1)))


def responsibilities(X, theta):
    """Posterior component probabilities, one row per point."""
    lj = log_joint(X, theta)
    norm = logsumexp(lj, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        bad = int(np.flatnonzero(~np.isfinite(norm[:, 0]))[0])
        raise DegenerateResponsibility(f"row {bad} has no finite component density")
    return np.exp(lj - norm)


def hard_labels(w):
    """Most responsible component per row; ties go to the lowest index."""
    return np.argmax(w, axis=1)


def baum_q(X, theta, w):
    """Expected complete-data log-likelihood under responsibilities ``w``."""
    lj = log_joint(X, theta)
    w = np.asarray(w, dtype=float)
    if w.shape != lj.shape:
        raise DimensionError(f"responsibilities shape {w.shape} does not match {lj.shape}")
    terms = np.where(w > 0, w * np.where(w > 0, lj, 0.0), 0.0)
    return float(np.sum(terms))


def regularization(X):
    X = _as_data(X)
    centred = X - X.mean(axis=0)
    return REGULARIZATION_SCALE * float(np.sum(centred * centred)) / X.shape[0] / X.shape[1]


def m_step(X, w, reg=None):
    """Weighted maximum-likelihood update; covariances use the new means.

    ``reg`` is added to every covariance diagonal and defaults to
    :func:`regularization` of ``X``.
    """
    X = _as_data(X)
    w = np.asarray(w, dtype=float)
    n, dim = X.shape
    if w.ndim != 2 or w.shape[0] != n:
        raise DimensionError(f"responsibilities shape {w.shape} does not match {n} points")
    if reg is None:
        reg = regularization(X)
    totals = w.sum(axis=0)
    components = []
    for k, total in enumerate(totals):
        if total < EMPTY_COMPONENT_RTOL * n:
            raise EmptyComponent(f"component {k} has total responsibility {total:.3g}", component=k)
        mean = w[:, k] @ X / total
        centred = X - mean
        cov = (centred * w[:, k, None]).T @ centred / total
        cov = 0.5 * (cov + cov.T) + reg * np.eye(dim)
        components.append(GaussianParams(mean, cov))
    weights = totals / n
    return MixtureParams(weights / weights.sum(), components)


def init_grid(X, k_hat, seed):
    """Grid initialisation for 2-D data.

    The data bounding box is split into ``r x r`` cells with
    ``r = ceil(sqrt(k_hat))``; ``k_hat`` distinct cells are drawn uniformly and
    their centres become the initial means.  Every covariance is
    ``diag(sx**2, sy**2)`` with ``sx, sy`` one sixth of the box sides.
    """
    X = _as_data(X, 2)
    k_hat = int(k_hat)
    if k_hat < 1:
        raise InvalidArgument(f"k_hat must be >= 1, got {k_hat}")
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        raise DegenerateData(f"data box has zero extent: {lo} to {hi}")
    r = math.isqrt(k_hat - 1) + 1  # ceil(sqrt(k_hat))
    cells = Rng(seed).permutation(r * r)[:k_hat]
    col, row = cells % r, cells // r
    means = lo + (np.stack([col, row], axis=1) + 0.5) * span / r
    cov = np.diag((span / 6.0) ** 2)
    return MixtureParams(np.full(k_hat, 1.0 / k_hat), [GaussianParams(m, cov) for m in means])


def fit_em(X, init, stop=StoppingRule()):
    """Alternate E- and M-steps until the log-likelihood settles or passes run out."""
    X = _as_data(X, init.dim)
    reg = regularization(X)
    theta = init
    trace = EmTrace([EmPass(0, theta, mixture_log_likelihood(X, theta))])
    for p in range(1, stop.max_passes + 1):
        try:
            w = responsibilities(X, theta)
            theta = m_step(X, w, reg)
        except DegenerateResponsibility as exc:
            raise DegenerateResponsibility(str(exc), pass_index=p) from exc
        except EmptyComponent as exc:
            raise EmptyComponent(str(exc), component=exc.component, pass_index=p) from exc
        loglik = mixture_log_likelihood(X, theta)
        trace.passes.append(EmPass(p, theta, loglik))
        if abs(loglik - trace.passes[-2].loglik) < stop.loglik_tol:
            trace.stop_reason = "converged"
            return trace
    trace.stop_reason = "max_passes"
    return trace


def generate_gmm_data(theta, n, seed):
    """Draw ``n`` labelled samples; returns ``(X, z)`` with 0-based labels ``z``."""
    n = int(n)
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    rng = Rng(seed)
    cdf = np.cumsum(theta.weights)
    z = np.searchsorted(cdf, rng.uniform(n), side="right")
    z = np.minimum(z, np.flatnonzero(theta.weights > 0)[-1])
    eps = rng.normal((n, theta.dim))
    means = theta.means[z]
    chols = np.stack([c.chol for c in theta.components])[z]
    X = means + np.einsum("nij,nj->ni", chols, eps)
    return X, z
