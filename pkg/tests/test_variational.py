import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate, stats

from mixlab.errors import DimensionError, InvalidArgument, NotPositiveDefinite, UnsupportedModel
from mixlab.gauss import GaussianParams, log_density_batch
from mixlab.variational import (
    LatentModel,
    LinearGaussianFamily,
    analytic_vlb,
    evidence_gap,
    expected_log_joint,
    gaussian_entropy,
    generalized_em_step,
    init_mean_field,
    kl_diag_standard,
    kl_gaussian,
    linear_gaussian_model,
    mean_field_fit,
    mean_field_update,
    quadratic_model,
    vlb_gaussian_q,
)


def random_gaussian(rng, n):
    a = rng.normal(size=(n, n))
    return GaussianParams(rng.normal(size=n), a @ a.T + 0.2 * np.eye(n))


def random_linear_gaussian(rng, n_obs=None, dz=None, dx=None):
    dz = dz or int(rng.integers(1, 4))
    dx = dx or int(rng.integers(1, 4))
    n_obs = n_obs or int(rng.integers(1, 6))
    prior = random_gaussian(rng, dz)
    noise = random_gaussian(rng, dx).cov
    loading = rng.normal(size=(dx, dz))
    X = rng.normal(size=(n_obs, dx)) * 2
    return X, loading, noise, prior


def stacked_evidence(X, loading, noise, prior):
    """log p(X) from the joint Gaussian of all observations stacked together."""
    n, dx = X.shape
    design = np.tile(loading, (n, 1))
    mean = design @ prior.mean
    cov = np.kron(np.eye(n), noise) + design @ prior.cov @ design.T
    return stats.multivariate_normal(mean, cov).logpdf(X.ravel())


def gauss_hermite_expectation(f, q, order=8):
    """E_q[f(z)] on a tensor Gauss-Hermite grid (exact for low-degree polynomials)."""
    nodes, weights = hermegauss(order)
    weights = weights / weights.sum()
    grids = np.meshgrid(*([nodes] * q.dim), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack(np.meshgrid(*([weights] * q.dim), indexing="ij")).reshape(q.dim, -1), axis=0)
    z = q.mean + u @ q.chol.T
    return float(np.sum(w * f(z)))


class TestKl:
    def test_self_divergence(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 4):
            q = random_gaussian(rng, n)
            assert abs(kl_gaussian(q, q)) <= 1e-12

    def test_univariate_quadrature(self):
        q = GaussianParams([0.5], [[0.25]])
        p = GaussianParams([0.0], [[1.0]])
        f = lambda x: stats.norm.pdf(x, 0.5, 0.5) * (stats.norm.logpdf(x, 0.5, 0.5) - stats.norm.logpdf(x))
        expected, _ = integrate.quad(f, -10, 10, epsabs=1e-13, epsrel=1e-13)
        assert kl_gaussian(q, p) == pytest.approx(expected, abs=1e-6)
        assert kl_gaussian(q, p) == pytest.approx(0.44314718055994531, abs=1e-12)

    def test_bivariate_grid(self):
        q = GaussianParams([0.3, -0.2], [[0.6, 0.1], [0.1, 0.4]])
        p = GaussianParams([0.0, 0.5], [[1.0, 0.6], [0.6, 1.5]])
        xs = np.linspace(-10, 10, 400)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        lq, lp = log_density_batch(pts, q), log_density_batch(pts, p)
        h = xs[1] - xs[0]
        expected = np.sum(np.exp(lq) * (lq - lp)) * h * h
        assert kl_gaussian(q, p) == pytest.approx(expected, abs=1e-4)

    def test_non_negative(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            assert kl_gaussian(random_gaussian(rng, n), random_gaussian(rng, n)) >= -1e-12

    def test_diag_specialisation(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            mu, lv = rng.normal(size=3), rng.normal(size=3)
            q = GaussianParams(mu, np.diag(np.exp(lv)))
            assert kl_diag_standard(mu, lv) == pytest.approx(kl_gaussian(q, GaussianParams(np.zeros(3), np.eye(3))), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            kl_gaussian(GaussianParams([0.0], [[1.0]]), GaussianParams([0.0, 0.0], np.eye(2)))


class TestModels:
    def test_linear_gaussian_evidence_matches_stacked_marginal(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            X, loading, noise, prior = random_linear_gaussian(rng)
            model = linear_gaussian_model(X, loading, noise, prior)
            assert model.exact_log_evidence == pytest.approx(stacked_evidence(X, loading, noise, prior), abs=1e-9)

    def test_joint_density_matches_quadratic_form(self):
        rng = np.random.default_rng(4)
        X, loading, noise, prior = random_linear_gaussian(rng, dz=2)
        model = linear_gaussian_model(X, loading, noise, prior)
        z = rng.normal(size=(10, 2))
        np.testing.assert_allclose(model.joint_log_density(z), model.quadratic(z), atol=1e-9)


class TestVlbMonteCarlo:
    def test_self_model_is_exactly_zero(self):
        q = GaussianParams([0.2, -0.4], [[1.0, 0.3], [0.3, 0.8]])
        model = LatentModel(lambda z: log_density_batch(z, q), 2)
        est = vlb_gaussian_q(model, q, 1000, 3)
        assert est.value == 0.0 and est.std_error == 0.0

    def test_exact_posterior_attains_evidence(self):
        rng = np.random.default_rng(5)
        model = linear_gaussian_model(*random_linear_gaussian(rng, dz=2))
        est = vlb_gaussian_q(model, model.exact_posterior, 5000, 4)
        # the integrand is constant at q = posterior, so only rounding remains
        assert abs(est.value - model.exact_log_evidence) <= 3 * est.std_error + 1e-9

    def test_bound_holds_for_arbitrary_q(self):
        rng = np.random.default_rng(6)
        model = linear_gaussian_model(*random_linear_gaussian(rng, dz=2))
        for i in range(10):
            q = random_gaussian(rng, 2)
            est = vlb_gaussian_q(model, q, 20_000, i)
            assert est.value <= model.exact_log_evidence + 3 * est.std_error
            assert abs(est.value - analytic_vlb(model, q)) <= 4 * est.std_error

    def test_errors(self):
        model = quadratic_model(np.eye(2), [0.0, 0.0])
        with pytest.raises(DimensionError):
            vlb_gaussian_q(model, GaussianParams([0.0], [[1.0]]), 10, 0)
        with pytest.raises(InvalidArgument):
            vlb_gaussian_q(model, GaussianParams([0.0, 0.0], np.eye(2)), 0, 0)


class TestEvidenceGap:
    def test_exact_posterior(self):
        model = quadratic_model([[2.0, 0.5], [0.5, 1.0]], [1.0, -1.0], 0.3)
        assert abs(evidence_gap(model, model.exact_posterior)) <= 1e-12
        assert abs(kl_gaussian(model.exact_posterior, model.exact_posterior)) <= 1e-12

    def test_perturbed_mean(self):
        model = quadratic_model([[2.0, 0.5], [0.5, 1.0]], [1.0, -1.0], 0.3)
        post = model.exact_posterior
        q = GaussianParams(post.mean + 0.3, post.cov)
        assert abs(evidence_gap(model, q)) <= 1e-8
        drop = analytic_vlb(model, post) - analytic_vlb(model, q)
        # for a shifted mean the KL is half the squared shift in the posterior metric
        shift = np.full(2, 0.3)
        expected_kl = 0.5 * shift @ np.array([[2.0, 0.5], [0.5, 1.0]]) @ shift
        assert drop == pytest.approx(expected_kl, abs=1e-12)
        assert kl_gaussian(q, post) == pytest.approx(expected_kl, abs=1e-12)

    def test_unsupported(self):
        with pytest.raises(UnsupportedModel):
            evidence_gap(LatentModel(lambda z: -z[:, 0] ** 4, 1), GaussianParams([0.0], [[1.0]]))

    def test_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            model = linear_gaussian_model(*random_linear_gaussian(rng))
            q = random_gaussian(rng, model.latent_dim)
            assert abs(evidence_gap(model, q)) <= 1e-8
            assert analytic_vlb(model, q) <= model.exact_log_evidence


class TestBaumLink:
    def test_expected_log_joint_and_entropy_by_quadrature(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            model = linear_gaussian_model(*random_linear_gaussian(rng, dz=int(rng.integers(1, 3))))
            q = random_gaussian(rng, model.latent_dim)
            e_joint = gauss_hermite_expectation(model.joint_log_density, q)
            e_logq = gauss_hermite_expectation(lambda z: log_density_batch(z, q), q)
            assert analytic_vlb(model, q) - (e_joint - e_logq) == pytest.approx(0.0, abs=1e-8)
            assert expected_log_joint(model, q) == pytest.approx(e_joint, abs=1e-8)
            assert gaussian_entropy(q) == pytest.approx(-e_logq, abs=1e-8)


class TestMeanField:
    def test_factorized_posterior_is_exact(self):
        model = quadratic_model(np.diag([2.0, 4.0]), [1.0, 2.0])
        state = mean_field_fit(model, init_mean_field(model), 50, 1e-12)
        assert state.converged and state.n_sweeps == 2 and state.changes[1] == 0.0
        np.testing.assert_allclose([f.mean[0] for f in state.factors], [0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose([f.cov[0, 0] for f in state.factors], [0.5, 0.25], atol=1e-15)

    def test_correlated_fixed_point(self):
        precision = np.array([[2.0, 1.0], [1.0, 2.0]])
        linear = np.array([1.0, 0.0])
        model = quadratic_model(precision, linear)
        state = mean_field_fit(model, init_mean_field(model), 100, 1e-10)
        assert state.converged and state.n_sweeps <= 100
        # the two fixed-point equations m1 = (h1 - m2) / 2, m2 = (h2 - m1) / 2
        m2 = (linear[1] - linear[0] / 2) / (2 - 0.5)
        m1 = (linear[0] - m2) / 2
        np.testing.assert_allclose([f.mean[0] for f in state.factors], [m1, m2], atol=1e-8)
        np.testing.assert_allclose([f.cov[0, 0] for f in state.factors], [0.5, 0.5], atol=1e-8)
        assert np.all(np.diff(state.vlb_trace) >= -1e-9)

    def test_underestimates_marginal_variance(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = rng.normal(size=(2, 2))
            precision = a @ a.T + 0.1 * np.eye(2)
            model = quadratic_model(precision, rng.normal(size=2))
            state = mean_field_fit(model, init_mean_field(model), 500, 1e-12)
            true_var = np.diag(np.linalg.inv(precision))
            for j, f in enumerate(state.factors):
                assert f.cov[0, 0] <= true_var[j] + 1e-10
                assert f.cov[0, 0] == pytest.approx(1 / precision[j, j], abs=1e-12)

    def test_vlb_trace_monotone_on_random_models(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            a = rng.normal(size=(n, n))
            model = quadratic_model(a @ a.T + 0.5 * np.eye(n), rng.normal(size=n), rng.normal())
            state = mean_field_fit(model, init_mean_field(model), 200, 1e-10)
            trace = np.array(state.vlb_trace)
            assert np.all(np.diff(trace) >= -1e-9)
            assert trace[-1] <= model.exact_log_evidence + 1e-9

    def test_block_partition(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(4, 4))
        model = quadratic_model(a @ a.T + np.eye(4), rng.normal(size=4))
        state = mean_field_fit(model, init_mean_field(model, partition=[[0, 2], [1, 3]]), 500, 1e-12)
        assert state.converged
        np.testing.assert_allclose(state.joint().mean, model.exact_posterior.mean, atol=1e-9)

    def test_update_errors(self):
        model = quadratic_model(np.eye(2), [0.0, 0.0])
        state = init_mean_field(model)
        with pytest.raises(InvalidArgument):
            mean_field_update(model, state, 2)
        with pytest.raises(UnsupportedModel):
            mean_field_update(LatentModel(lambda z: -z[:, 0] ** 4, 2), state, 0)

    def test_bad_partition(self):
        with pytest.raises(InvalidArgument):
            init_mean_field(quadratic_model(np.eye(3), np.zeros(3)), partition=[[0], [0, 1]])

    def test_non_spd_precision(self):
        with pytest.raises(NotPositiveDefinite):
            quadratic_model([[1.0, 2.0], [2.0, 1.0]], [0.0, 0.0])


class TestGeneralizedEm:
    def family(self, seed):
        rng = np.random.default_rng(seed)
        X, loading, noise, prior = random_linear_gaussian(rng, n_obs=6, dz=2, dx=3)
        return LinearGaussianFamily(X, loading, noise, prior.cov), rng

    def test_ascent_over_random_starts(self):
        for seed in range(10):
            fam, rng = self.family(seed)
            theta = rng.normal(size=2) * 3
            q = random_gaussian(rng, 2)
            values = [fam.vlb(q, theta)]
            for _ in range(15):
                q, theta = generalized_em_step(fam, q, theta)
                values.append(fam.vlb(q, theta))
            assert np.all(np.diff(values) >= -1e-9)

    def test_step_is_exact_e_and_m(self):
        from scipy.optimize import minimize

        fam, rng = self.family(20)
        theta = rng.normal(size=2)
        q_new, theta_new = generalized_em_step(fam, random_gaussian(rng, 2), theta)
        assert kl_gaussian(q_new, fam.posterior(theta)) <= 1e-12
        assert fam.vlb(q_new, theta) == pytest.approx(fam.log_evidence(theta), abs=1e-9)
        res = minimize(lambda t: -fam.vlb(q_new, t), theta, method="BFGS", options={"gtol": 1e-10})
        np.testing.assert_allclose(theta_new, res.x, atol=1e-5)

    def test_converges_to_marginal_likelihood_maximizer(self):
        fam, rng = self.family(30)
        theta = rng.normal(size=2)
        q = fam.posterior(theta)
        for _ in range(2000):
            q, theta = generalized_em_step(fam, q, theta)
        np.testing.assert_allclose(theta, fam.ml_theta(), atol=1e-8)

    def test_stationary_point(self):
        fam, _ = self.family(40)
        theta = fam.ml_theta()
        q = fam.posterior(theta)
        q2, theta2 = generalized_em_step(fam, q, theta)
        np.testing.assert_allclose(theta2, theta, atol=1e-10)
        np.testing.assert_allclose(q2.mean, q.mean, atol=1e-10)
        np.testing.assert_allclose(q2.cov, q.cov, atol=1e-10)

    def test_unsupported_family(self):
        with pytest.raises(UnsupportedModel):
            generalized_em_step(object(), GaussianParams([0.0], [[1.0]]), np.zeros(1))
