"""Variational lower bounds, KL divergence and mean-field coordinate ascent.

Closed-form routines cover joints whose log-density is quadratic in the
latent vector ``z``::

    log p(X, z) = const + linear @ z - 0.5 * z @ precision @ z

Latent log-densities take a batch of shape ``(n, latent_dim)`` and return
``(n,)``.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, InvalidArgument, UnsupportedModel
from .gauss import LOG_2PI, GaussianParams, cholesky, log_density_batch
from .reparam import summarize
from .rng import Rng


def kl_gaussian(q, p):
    """``KL(q || p)`` for two Gaussians of equal dimension."""
    if q.dim != p.dim:
        raise DimensionError(f"dimensions differ: {q.dim} vs {p.dim}")
    a = solve_triangular(p.chol, q.chol, lower=True)
    b = solve_triangular(p.chol, p.mean - q.mean, lower=True)
    return float(0.5 * (np.sum(a * a) + b @ b - q.dim + p.log_det() - q.log_det()))


def kl_diag_standard(mu, log_var):
    """``KL(N(mu, diag(exp(log_var))) || N(0, I))`` in the elementwise form."""
    mu = np.asarray(mu, dtype=float)
    log_var = np.asarray(log_var, dtype=float)
    return float(-0.5 * np.sum(1.0 + log_var - mu * mu - np.exp(log_var)))


def gaussian_entropy(q):
    return 0.5 * (q.dim * (1.0 + LOG_2PI) + q.log_det())


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    precision: np.ndarray
    linear: np.ndarray
    const: float

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        quad = np.einsum("...i,ij,...j->...", z, self.precision, z)
        return self.const + z @ self.linear - 0.5 * quad


@dataclass(frozen=True, eq=False)
class LatentModel:
    """``log p(X, Z)`` with the data baked in.

    ``exact_log_evidence`` and ``exact_posterior`` are present only for
    tractable models; ``quadratic`` only for the closed-form family.
    """

    joint_log_density: Callable
    latent_dim: int
    exact_log_evidence: Optional[float] = None
    exact_posterior: Optional[GaussianParams] = None
    quadratic: Optional[QuadraticForm] = None


def quadratic_model(precision, linear, const=0.0, joint_log_density=None):
    """Latent model with a Gaussian posterior; evidence and posterior are exact."""
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    linear = np.atleast_1d(np.asarray(linear, dtype=float))
    chol = cholesky(precision)
    post_cov = np.linalg.inv(precision)
    post_cov = 0.5 * (post_cov + post_cov.T)
    post_mean = np.linalg.solve(precision, linear)
    dim = linear.size
    log_evidence = (
        const + 0.5 * linear @ post_mean + 0.5 * dim * LOG_2PI - float(np.sum(np.log(np.diag(chol))))
    )
    form = QuadraticForm(precision, linear, float(const))
    return LatentModel(
        joint_log_density=form if joint_log_density is None else joint_log_density,
        latent_dim=dim,
        exact_log_evidence=float(log_evidence),
        exact_posterior=GaussianParams(post_mean, post_cov),
        quadratic=form,
    )


def linear_gaussian_model(X, loading, noise, prior):
    """Shared latent ``z ~ prior`` with observations ``x_n ~ N(loading @ z, noise)``.

    The joint log-density is evaluated from the generative pieces, while the
    exact evidence and posterior come from the equivalent quadratic form.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    loading = np.atleast_2d(np.asarray(loading, dtype=float))
    noise = noise if isinstance(noise, GaussianParams) else GaussianParams(np.zeros(loading.shape[0]), noise)
    if loading.shape != (X.shape[1], prior.dim) or noise.dim != X.shape[1]:
        raise DimensionError("loading, noise and data dimensions disagree")
    n = X.shape[0]
    noise_prec = noise.precision()
    prior_prec = prior.precision()
    precision = prior_prec + n * loading.T @ noise_prec @ loading
    linear = prior_prec @ prior.mean + loading.T @ noise_prec @ X.sum(axis=0)
    const = (
        -0.5 * prior.mean @ prior_prec @ prior.mean
        - 0.5 * (prior.dim * LOG_2PI + prior.log_det())
        - 0.5 * np.einsum("ni,ij,nj->", X, noise_prec, X)
        - 0.5 * n * (noise.dim * LOG_2PI + noise.log_det())
    )

    def joint(z):
        z = np.atleast_2d(z)
        out = log_density_batch(z, prior)
        for x in X:
            out = out + log_density_batch(x - z @ loading.T, noise)
        return out

    return quadratic_model(precision, linear, const, joint_log_density=joint)


def _require_quadratic(model):
    if model.quadratic is None:
        raise UnsupportedModel("closed-form routines need a joint quadratic in the latent variables")
    return model.quadratic


def expected_log_joint(model, q):
    """``E_q[log p(X, Z)]`` in closed form for the quadratic family."""
    form = _require_quadratic(model)
    m, s = q.mean, q.cov
    return float(form.const + form.linear @ m - 0.5 * (m @ form.precision @ m + np.sum(form.precision * s)))


def analytic_vlb(model, q):
    return expected_log_joint(model, q) + gaussian_entropy(q)


def vlb_gaussian_q(model, q, n_mc, seed):
    """Monte Carlo estimate of ``E_q[log p(X, Z) - log q(Z)]``."""
    if q.dim != model.latent_dim:
        raise DimensionError(f"q has dimension {q.dim}, model latent dimension {model.latent_dim}")
    if int(n_mc) < 1:
        raise InvalidArgument(f"n_mc must be >= 1, got {n_mc}")
    z = q.mean + Rng(seed).normal((int(n_mc), q.dim)) @ q.chol.T
    terms = np.asarray(model.joint_log_density(z), dtype=float) - log_density_batch(z, q)
    return summarize(terms)


def evidence_gap(model, q):
    """``log p(X) - (L[q] + KL(q || posterior))``; zero up to rounding."""
    if model.exact_log_evidence is None or model.exact_posterior is None:
        raise UnsupportedModel("model has no exact evidence or posterior")
    return model.exact_log_evidence - (analytic_vlb(model, q) + kl_gaussian(q, model.exact_posterior))


@dataclass
class MeanFieldState:
    factors: List[GaussianParams]
    partition: List[np.ndarray]
    vlb_trace: List[float] = field(default_factory=list)
    changes: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def n_sweeps(self):
        return len(self.changes)

    def joint(self):
        """The product density as one block-diagonal Gaussian."""
        dim = sum(b.size for b in self.partition)
        mean = np.zeros(dim)
        cov = np.zeros((dim, dim))
        for block, f in zip(self.partition, self.factors):
            mean[block] = f.mean
            cov[np.ix_(block, block)] = f.cov
        return GaussianParams(mean, cov)


def init_mean_field(model, partition=None, factors=None):
    """Singleton blocks and unit-variance zero-mean factors unless given."""
    dim = model.latent_dim
    if partition is None:
        partition = [np.array([i]) for i in range(dim)]
    partition = [np.atleast_1d(np.asarray(b, dtype=int)) for b in partition]
    covered = np.sort(np.concatenate(partition))
    if covered.size != dim or np.any(covered != np.arange(dim)):
        raise InvalidArgument("partition blocks must cover every latent coordinate exactly once")
    if factors is None:
        factors = [GaussianParams(np.zeros(b.size), np.eye(b.size)) for b in partition]
    if [f.dim for f in factors] != [b.size for b in partition]:
        raise DimensionError("factor dimensions do not match partition blocks")
    state = MeanFieldState(list(factors), partition)
    if model.quadratic is not None:
        state.vlb_trace.append(analytic_vlb(model, state.joint()))
    return state


def mean_field_update(model, state, j):
    """Optimal factor for block ``j`` with every other factor held fixed."""
    form = _require_quadratic(model)
    if not 0 <= j < len(state.partition):
        raise InvalidArgument(f"block index {j} out of range for {len(state.partition)} blocks")
    block = state.partition[j]
    rest = np.concatenate([b for i, b in enumerate(state.partition) if i != j] or [np.array([], int)])
    rest_mean = np.concatenate([f.mean for i, f in enumerate(state.factors) if i != j] or [np.array([])])
    prec_bb = form.precision[np.ix_(block, block)]
    rhs = form.linear[block] - form.precision[np.ix_(block, rest)] @ rest_mean
    cov = np.linalg.inv(prec_bb)
    return GaussianParams(np.linalg.solve(prec_bb, rhs), 0.5 * (cov + cov.T))


def mean_field_fit(model, init, max_sweeps=100, tol=1e-10):
    """Gauss-Seidel sweeps over the blocks until no factor entry moves by ``tol``."""
    _require_quadratic(model)
    state = replace(init, factors=list(init.factors), vlb_trace=list(init.vlb_trace), changes=[])
    if not state.vlb_trace:
        state.vlb_trace.append(analytic_vlb(model, state.joint()))
    for _ in range(int(max_sweeps)):
        change = 0.0
        for j in range(len(state.partition)):
            new = mean_field_update(model, state, j)
            old = state.factors[j]
            change = max(change, np.max(np.abs(new.mean - old.mean)), np.max(np.abs(new.cov - old.cov)))
            state.factors[j] = new
        state.changes.append(float(change))
        state.vlb_trace.append(analytic_vlb(model, state.joint()))
        if change < tol:
            state.converged = True
            break
    return state


class LinearGaussianFamily:
    """Parametric family for generalised EM.

    A shared latent ``z ~ N(theta, prior_cov)`` generates observations
    ``x_n ~ N(loading @ z, noise_cov)``; the parameter is the prior mean.
    """

    def __init__(self, X, loading, noise_cov, prior_cov):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.loading = np.atleast_2d(np.asarray(loading, dtype=float))
        self.noise = GaussianParams(np.zeros(self.X.shape[1]), noise_cov)
        self.prior_cov = np.atleast_2d(np.asarray(prior_cov, dtype=float))

    @property
    def latent_dim(self):
        return self.loading.shape[1]

    def model(self, theta):
        prior = GaussianParams(theta, self.prior_cov)
        return linear_gaussian_model(self.X, self.loading, self.noise, prior)

    def posterior(self, theta):
        return self.model(theta).exact_posterior

    def m_step(self, q):
        # only the prior term depends on theta; its expectation peaks at the mean of q
        return np.array(q.mean, dtype=float)

    def vlb(self, q, theta):
        return analytic_vlb(self.model(theta), q)

    def log_evidence(self, theta):
        return self.model(theta).exact_log_evidence

    def ml_theta(self):
        """Maximiser of ``log p(X | theta)`` from the stacked marginal Gaussian."""
        n, dx = self.X.shape
        design = np.tile(self.loading, (n, 1))
        cov = np.kron(np.eye(n), self.noise.cov) + design @ self.prior_cov @ design.T
        weighted = np.linalg.solve(cov, design)
        return np.linalg.solve(design.T @ weighted, weighted.T @ self.X.ravel())


def generalized_em_step(family, q, theta):
    """Variational E-step (exact posterior) followed by the M-step for ``theta``."""
    if not hasattr(family, "posterior") or not hasattr(family, "m_step"):
        raise UnsupportedModel(f"{type(family).__name__} lacks closed-form posterior and M-step")
    q_new = family.posterior(theta)
    return q_new, family.m_step(q_new)
