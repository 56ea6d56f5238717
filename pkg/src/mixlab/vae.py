"""Variational autoencoder with MLP encoder/decoder and hand-written backprop.

Both networks output a diagonal Gaussian as ``(mu, log_var)`` heads.  Hidden
layers use tanh; the output layer is affine.  A decoder may instead carry a
``log_var`` vector that does not depend on ``z`` (``decoder_logvar="shared"``),
which makes a decoder without hidden layers an exact linear-Gaussian model.

Gradients are exact derivatives of the Monte Carlo bound with the noise
``eps`` held fixed, so they flow through ``z = mu + sigma * eps``.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionError, InvalidArgument, IoError, NumericalOverflow
from .gauss import LOG_2PI, GaussianParams, standard_normal
from .reparam import McEstimate, summarize
from .rng import Rng


@dataclass(eq=False)
class MlpParams:
    """``layers[i] = (W, b)`` with ``W`` of shape ``(out, in)``."""

    layers: List[Tuple[np.ndarray, np.ndarray]]
    log_var: Optional[np.ndarray] = None

    def __post_init__(self):
        self.layers = [(np.asarray(w, dtype=float), np.asarray(b, dtype=float)) for w, b in self.layers]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise DimensionError(f"layer {i} input {w.shape[1]} does not chain from layer {i - 1}")
        if self.log_var is not None:
            self.log_var = np.asarray(self.log_var, dtype=float)

    @classmethod
    def init(cls, sizes, seed, key=(), shared_log_var=False):
        """Uniform weights and biases in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.

        ``sizes`` lists every layer width including input and raw output.
        """
        rng = Rng(seed, key)
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            w = (2.0 * rng.uniform(fan_out * fan_in) - 1.0).reshape(fan_out, fan_in) * bound
            b = (2.0 * rng.uniform(fan_out) - 1.0) * bound
            layers.append((w, b))
        return cls(layers, np.zeros(sizes[-1]) if shared_log_var else None)

    @property
    def n_in(self):
        return self.layers[0][0].shape[1]

    @property
    def n_out(self):
        """Dimension of the Gaussian this network parametrises."""
        raw = self.layers[-1][0].shape[0]
        return raw if self.log_var is not None else raw // 2

    def tensors(self):
        out = []
        for i, (w, b) in enumerate(self.layers):
            out += [(f"layer{i}.weight", w), (f"layer{i}.bias", b)]
        if self.log_var is not None:
            out.append(("log_var", self.log_var))
        return out

    def flatten(self):
        return np.concatenate([t.ravel() for _, t in self.tensors()])

    def unflatten(self, vector):
        vector = np.asarray(vector, dtype=float)
        pos = 0
        parts = []
        for _, t in self.tensors():
            parts.append(vector[pos:pos + t.size].reshape(t.shape))
            pos += t.size
        if pos != vector.size:
            raise DimensionError(f"vector of length {vector.size}, parameters need {pos}")
        layers = [(parts[2 * i], parts[2 * i + 1]) for i in range(len(self.layers))]
        return MlpParams(layers, parts[-1] if self.log_var is not None else None)

    def zeros_like(self):
        return self.unflatten(np.zeros_like(self.flatten()))

    def axpy(self, alpha, other):
        """``self + alpha * other`` as new parameters."""
        return self.unflatten(self.flatten() + alpha * other.flatten())


@dataclass(frozen=True, eq=False)
class DiagGaussian:
    """Gaussian with covariance ``diag(exp(log_var))``."""

    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self):
        return np.exp(0.5 * self.log_var)

    def to_params(self):
        return GaussianParams(self.mu, np.diag(np.exp(self.log_var)))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return float(-0.5 * np.sum(LOG_2PI + self.log_var + (x - self.mu) ** 2 * np.exp(-self.log_var)))


EncoderOutput = DiagGaussian


def _forward(params, inputs, where):
    acts = [inputs]
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = acts[-1] @ w.T + b
        acts.append(np.tanh(h) if i < last else h)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        row = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
        raise NumericalOverflow("non-finite network output", location=f"{where} row {row}")
    if params.log_var is not None:
        return out, np.broadcast_to(params.log_var, out.shape), acts
    half = out.shape[1] // 2
    return out[:, :half], out[:, half:], acts


def _backward(params, acts, d_mu, d_log_var):
    """Gradients of ``sum(d_mu * mu + d_log_var * log_var)``; returns (grads, d_input)."""
    if params.log_var is not None:
        delta = d_mu
        g_log_var = d_log_var.sum(axis=0)
    else:
        delta = np.concatenate([d_mu, d_log_var], axis=1)
        g_log_var = None
    grads = []
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        delta = delta @ w
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    return MlpParams(grads[::-1], g_log_var), delta


def _check_input(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionError(f"input length {x.shape[-1]} does not match network input {n}")
    return x


def encode(x, phi):
    x = _check_input(x, phi.n_in)
    mu, log_var, _ = _forward(phi, np.atleast_2d(x), "encoder")
    return DiagGaussian(mu[0], np.array(log_var[0])) if x.ndim == 1 else DiagGaussian(mu, np.array(log_var))


def decode(z, theta):
    z = _check_input(z, theta.n_in)
    mu, log_var, _ = _forward(theta, np.atleast_2d(z), "decoder")
    return DiagGaussian(mu[0], np.array(log_var[0])) if z.ndim == 1 else DiagGaussian(mu, np.array(log_var))


def reparam_sample(enc, eps):
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != np.shape(enc.mu)[-1]:
        raise DimensionError(f"noise length {eps.shape[-1]} does not match latent size {np.shape(enc.mu)[-1]}")
    return enc.mu + enc.sigma * eps


@dataclass(frozen=True)
class ElboEstimate:
    value: float
    reconstruction: float
    kl_or_entropy: float
    estimator_kind: str


@dataclass
class _Bound:
    values: np.ndarray
    reconstruction: np.ndarray
    regularizer: np.ndarray
    grad_phi: Optional[MlpParams] = None
    grad_theta: Optional[MlpParams] = None


def _bound(X, phi, theta, eps, kind, prior, want_grad):
    """Per-point bound for a batch ``X (B, n_x)`` with noise ``eps (B, L, n_z)``."""
    if kind not in ("A", "B"):
        raise InvalidArgument(f"estimator kind must be 'A' or 'B', got {kind!r}")
    X = _check_input(np.atleast_2d(X), phi.n_in)
    n_z = phi.n_out
    if theta.n_in != n_z or theta.n_out != X.shape[1]:
        raise DimensionError("encoder and decoder dimensions do not chain")
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 3 or eps.shape[0] != X.shape[0] or eps.shape[2] != n_z:
        raise DimensionError(f"noise shape {eps.shape} does not match batch {X.shape[0]} and n_z {n_z}")
    batch, n_samples = eps.shape[:2]
    prior_prec = prior.precision()

    mu, log_var, enc_acts = _forward(phi, X, "encoder")
    sigma = np.exp(0.5 * log_var)
    z = (mu[:, None, :] + sigma[:, None, :] * eps).reshape(batch * n_samples, n_z)
    x_mu, x_log_var, dec_acts = _forward(theta, z, "decoder")
    x_rep = np.repeat(X, n_samples, axis=0)
    resid = x_rep - x_mu
    inv_var = np.exp(-x_log_var)
    recon = -0.5 * np.sum(LOG_2PI + x_log_var + resid * resid * inv_var, axis=1).reshape(batch, n_samples)
    recon_mean = recon.mean(axis=1)

    dz_prior = None
    if kind == "A":
        zc = z - prior.mean
        log_prior = -0.5 * (n_z * LOG_2PI + prior.log_det() + np.einsum("ni,ij,nj->n", zc, prior_prec, zc))
        # with z = mu + sigma * eps the variational density reduces to the noise density
        log_q = -0.5 * np.sum(LOG_2PI + log_var[:, None, :] + eps * eps, axis=2)
        regularizer = (log_q - log_prior.reshape(batch, n_samples)).mean(axis=1)
        dz_prior = -(zc @ prior_prec) / n_samples
    else:
        diff = prior.mean - mu
        regularizer = 0.5 * (
            np.exp(log_var) @ np.diag(prior_prec)
            + np.einsum("bi,ij,bj->b", diff, prior_prec, diff)
            - n_z
            + prior.log_det()
            - log_var.sum(axis=1)
        )
    values = recon_mean - regularizer
    if not np.all(np.isfinite(values)):
        row = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericalOverflow("non-finite bound", location=f"sample {row}")
    result = _Bound(values, recon_mean, regularizer)
    if not want_grad:
        return result

    d_x_mu = resid * inv_var / n_samples
    d_x_log_var = (-0.5 + 0.5 * resid * resid * inv_var) / n_samples
    grad_theta, dz = _backward(theta, dec_acts, d_x_mu, d_x_log_var)
    if dz_prior is not None:
        dz = dz + dz_prior
    dz = dz.reshape(batch, n_samples, n_z)
    d_mu = dz.sum(axis=1)
    d_log_var = 0.5 * np.sum(dz * eps, axis=1) * sigma
    if kind == "A":
        d_log_var = d_log_var + 0.5
    else:
        d_mu = d_mu - (mu - prior.mean) @ prior_prec
        d_log_var = d_log_var - 0.5 * (np.exp(log_var) * np.diag(prior_prec) - 1.0)
    grad_phi, _ = _backward(phi, enc_acts, d_mu, d_log_var)
    result.grad_phi = grad_phi
    result.grad_theta = grad_theta
    return result


def _noise(n_z, n_samples, seed, eps):
    if eps is not None:
        eps = np.asarray(eps, dtype=float)
        return eps.reshape(1, -1, n_z)
    if int(n_samples) < 1:
        raise InvalidArgument(f"L must be >= 1, got {n_samples}")
    return Rng(seed).normal((1, int(n_samples), n_z))


def _single(x, phi, theta, prior, n_samples, seed, eps, kind):
    prior = standard_normal(phi.n_out) if prior is None else prior
    x = _check_input(x, phi.n_in)
    if x.ndim != 1:
        raise DimensionError("expected a single data vector")
    res = _bound(x[None, :], phi, theta, _noise(phi.n_out, n_samples, seed, eps), kind, prior, False)
    return ElboEstimate(float(res.values[0]), float(res.reconstruction[0]), float(res.regularizer[0]), kind)


def elbo_A(x, phi, theta, prior=None, L=1, seed=0, eps=None):
    """Sampled joint-minus-entropy bound; ``eps`` of shape ``(L, n_z)`` overrides ``seed``."""
    return _single(x, phi, theta, prior, L, seed, eps, "A")


def elbo_B(x, phi, theta, prior=None, L=1, seed=0, eps=None):
    """Sampled reconstruction minus the closed-form KL to the prior."""
    return _single(x, phi, theta, prior, L, seed, eps, "B")


def elbo_draws(x, phi, theta, kind="B", prior=None, L=1000, seed=0):
    """``L`` independent single-sample estimates of the bound at ``x``."""
    prior = standard_normal(phi.n_out) if prior is None else prior
    x = _check_input(x, phi.n_in)
    eps = _noise(phi.n_out, L, seed, None).reshape(L, 1, phi.n_out)
    return _bound(np.repeat(x[None, :], L, axis=0), phi, theta, eps, kind, prior, False).values


def grad_elbo(X, phi, theta, eps, kind="B", prior=None):
    """Bound summed over the rows of ``X`` and its gradients.

    ``eps`` has shape ``(B, L, n_z)`` (or ``(L, n_z)`` for one vector).
    Returns ``(value, grad_phi, grad_theta)``.
    """
    prior = standard_normal(phi.n_out) if prior is None else prior
    X = np.atleast_2d(X)
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 2:
        eps = eps[None]
    res = _bound(X, phi, theta, eps, kind, prior, True)
    return float(res.values.sum()), res.grad_phi, res.grad_theta


@dataclass(frozen=True)
class VaeConfig:
    n_x: int
    n_z: int = 2
    hidden: Tuple[int, ...] = (16,)
    L: int = 1
    batch_size: int = 100
    learning_rate: float = 3e-4
    epochs: int = 200
    seed: int = 0
    decoder_logvar: str = "network"

    def __post_init__(self):
        if self.L < 1 or self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgument("L, batch_size must be >= 1 and epochs >= 0")
        if self.learning_rate < 0:
            raise InvalidArgument("learning_rate must be non-negative")
        if self.decoder_logvar not in ("network", "shared"):
            raise InvalidArgument(f"decoder_logvar must be 'network' or 'shared', got {self.decoder_logvar!r}")

    def init_params(self):
        hidden = list(self.hidden)
        phi = MlpParams.init([self.n_x, *hidden, 2 * self.n_z], self.seed, key=(0, 0))
        shared = self.decoder_logvar == "shared"
        out = self.n_x if shared else 2 * self.n_x
        theta = MlpParams.init([self.n_z, *hidden[::-1], out], self.seed, key=(0, 1), shared_log_var=shared)
        return phi, theta


@dataclass
class VaeResult:
    phi: MlpParams
    theta: MlpParams
    trace: List[float] = field(default_factory=list)


def train_vae(data, config, kind="B", init=None, prior=None):
    """Minibatch SGD ascent on the chosen bound estimator.

    Each epoch draws a fresh permutation; the noise for batch ``b`` of epoch
    ``e`` comes from the stream keyed ``(seed, 2, e, b)``.  The trace holds
    the mean per-point bound over each epoch's batches, evaluated before the
    update.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if data.shape[1] != config.n_x:
        raise DimensionError(f"data dimension {data.shape[1]} does not match n_x={config.n_x}")
    if config.batch_size > n:
        raise InvalidArgument(f"batch size {config.batch_size} exceeds dataset size {n}")
    prior = standard_normal(config.n_z) if prior is None else prior
    phi, theta = config.init_params() if init is None else init
    trace = []
    for epoch in range(config.epochs):
        order = Rng(config.seed, key=(1, epoch)).permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            eps = Rng(config.seed, key=(2, epoch, b)).normal((idx.size, config.L, config.n_z))
            try:
                res = _bound(data[idx], phi, theta, eps, kind, prior, True)
            except NumericalOverflow as exc:
                raise NumericalOverflow(str(exc), location=f"epoch {epoch} batch {b}") from exc
            total += res.values.sum()
            step = config.learning_rate / idx.size
            if step:
                phi = phi.axpy(step, res.grad_phi)
                theta = theta.axpy(step, res.grad_theta)
        trace.append(total / n)
    return VaeResult(phi, theta, trace)


def evaluate_bound(data, phi, theta, L=1000, seed=0, kind="B", prior=None):
    """Mean per-point bound over ``data`` with ``L`` samples each.

    The standard error combines the per-point Monte Carlo errors.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    prior = standard_normal(phi.n_out) if prior is None else prior
    values = np.empty(data.shape[0])
    var = 0.0
    for i, x in enumerate(data):
        eps = Rng(seed, key=(3, i)).normal((L, 1, phi.n_out))
        est = summarize(_bound(np.repeat(x[None, :], L, axis=0), phi, theta, eps, kind, prior, False).values)
        values[i] = est.value
        var += est.std_error ** 2
    n = data.shape[0]
    return McEstimate(float(values.mean()), math.sqrt(var) / n, n * L)


def save_checkpoint(path, phi, theta):
    """One record per tensor: ``name shape values...`` with 17 significant digits."""
    lines = []
    for prefix, params in (("encoder", phi), ("decoder", theta)):
        for name, t in params.tensors():
            shape = ",".join(str(s) for s in t.shape)
            values = " ".join(format(v, ".17g") for v in t.ravel())
            lines.append(f"{prefix}.{name} {shape} {values}\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc.strerror}") from None


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(phi, theta)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            records = [line.split() for line in fh if line.strip()]
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    nets = {"encoder": {}, "decoder": {}}
    for rec in records:
        prefix, name = rec[0].split(".", 1)
        shape = tuple(int(s) for s in rec[1].split(","))
        nets[prefix][name] = np.array([float(v) for v in rec[2:]]).reshape(shape)

    def build(tensors):
        n_layers = sum(1 for k in tensors if k.endswith(".weight"))
        layers = [(tensors[f"layer{i}.weight"], tensors[f"layer{i}.bias"]) for i in range(n_layers)]
        return MlpParams(layers, tensors.get("log_var"))

    return build(nets["encoder"]), build(nets["decoder"])
