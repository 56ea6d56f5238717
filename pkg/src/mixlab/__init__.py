"""EM for Gaussian mixtures, mean-field variational Bayes and a small VAE."""

from .errors import (
    DegenerateData,
    DegenerateResponsibility,
    DimensionError,
    EmptyComponent,
    InvalidArgument,
    IoError,
    MixlabError,
    NonFiniteIntegrand,
    NotPositiveDefinite,
    NumericalOverflow,
    SingularMap,
    UnsupportedModel,
)
from .gauss import GaussianParams, log_density, sample_gaussian, sigma_ellipse
from .mixture import (
    EmTrace,
    MixtureParams,
    StoppingRule,
    baum_q,
    fit_em,
    generate_gmm_data,
    init_grid,
    m_step,
    mixture_log_likelihood,
    responsibilities,
)
from .reparam import InvertibleMap, McEstimate, mc_expectation, pushforward_log_density
from .rng import Rng
from .vae import MlpParams, VaeConfig, decode, elbo_A, elbo_B, encode, grad_elbo, reparam_sample, train_vae
from .variational import (
    LatentModel,
    MeanFieldState,
    evidence_gap,
    generalized_em_step,
    kl_gaussian,
    mean_field_fit,
    mean_field_update,
    vlb_gaussian_q,
)

__version__ = "0.1.0"
