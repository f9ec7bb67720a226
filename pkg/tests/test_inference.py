import numpy as np
import pytest
from scipy import integrate, optimize, stats

from approxloo.errors import ConvergenceError, DimensionMismatchError
from approxloo.inference import (
    LaplaceApproximation,
    McmcConfig,
    PosteriorDraws,
    adaptive_metropolis,
    gelman_rubin,
    laplace_approximate,
    laplace_log_density,
    sample_from_laplace,
    sample_posterior_mcmc,
)
from approxloo.model import Dataset, ModelSpec, log_posterior_unnormalized


def standard_normal_log_density(theta):
    return -0.5 * np.sum(theta * theta, axis=1)


def test_metropolis_recovers_standard_normal():
    draws, acc = adaptive_metropolis(
        standard_normal_log_density, np.zeros((4, 2)), iterations=12000, warmup=2000, seed=3
    )
    flat = draws.reshape(-1, 2)
    assert np.all(np.abs(flat.mean(axis=0)) < 0.05)
    assert np.all((flat.var(axis=0) > 0.9) & (flat.var(axis=0) < 1.1))
    assert np.all((acc > 0.15) & (acc < 0.4))


def test_metropolis_is_reproducible():
    a, _ = adaptive_metropolis(standard_normal_log_density, np.zeros((2, 3)), 600, 300, seed=9)
    b, _ = adaptive_metropolis(standard_normal_log_density, np.zeros((2, 3)), 600, 300, seed=9)
    np.testing.assert_array_equal(a, b)


def test_metropolis_non_finite_density_raises():
    def bad(theta):
        out = -0.5 * np.sum(theta * theta, axis=1)
        out[theta[:, 0] > 0.5] = np.nan
        return out

    with pytest.raises(ConvergenceError) as info:
        adaptive_metropolis(bad, np.zeros((2, 1)), 2000, 1000, seed=0)
    assert "iteration" in info.value.diagnostics


def test_rhat_stationary_chains():
    chains = np.random.default_rng(0).standard_normal((4, 2000, 3))
    assert np.all(gelman_rubin(chains) < 1.01)


def test_rhat_detects_separated_chains():
    rng = np.random.default_rng(1)
    chains = rng.standard_normal((4, 1000)) + np.array([0.0, 0.0, 5.0, 5.0])[:, None]
    assert gelman_rubin(chains)[0] > 2.0
    # a drifting chain is caught by splitting it in halves
    drift = rng.standard_normal((2, 1000)) + np.linspace(0, 4, 1000)
    assert gelman_rubin(drift)[0] > 1.2


def test_rhat_matches_hand_computation():
    arr = np.arange(16.0).reshape(2, 8) ** 1.5
    split = np.concatenate([arr[:, :4], arr[:, 4:]])
    W = split.var(axis=1, ddof=1).mean()
    B = 4 * split.mean(axis=1).var(ddof=1)
    expected = np.sqrt((3 / 4 * W + B / 4) / W)
    assert gelman_rubin(arr)[0] == pytest.approx(expected, rel=1e-12)


def test_rhat_needs_two_chains_and_enough_draws():
    with pytest.raises(ValueError):
        gelman_rubin(np.zeros((1, 100)))
    with pytest.raises(ValueError):
        gelman_rubin(np.random.default_rng(0).normal(size=(2, 6)))


def test_posterior_draws_validation():
    with pytest.raises(DimensionMismatchError):
        PosteriorDraws(np.zeros((5, 2)), chains=2)
    with pytest.raises(ValueError):
        PosteriorDraws(np.zeros((4, 2)), chains=2, method_tag="laplace-sample")
    d = PosteriorDraws(np.arange(12.0).reshape(6, 2), chains=3)
    assert d.per_chain == 2
    np.testing.assert_array_equal(d.chain_array()[1, 0], [4.0, 5.0])


def test_laplace_without_data_is_the_prior():
    empty = Dataset(np.zeros((0, 2)), np.zeros(0))
    q = laplace_approximate(ModelSpec((0, 1)), empty)
    np.testing.assert_allclose(q.mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(q.covariance, 6.25 * np.eye(3), rtol=1e-12)
    assert q.log_det_cov == pytest.approx(3 * np.log(6.25))


def test_laplace_mode_matches_generic_optimizer(synthetic_500):
    model = ModelSpec((0, 1, 2))
    q = laplace_approximate(model, synthetic_500)
    res = optimize.minimize(
        lambda t: -log_posterior_unnormalized(t, model, synthetic_500)[0],
        np.zeros(4),
        jac=lambda t: -log_posterior_unnormalized(t, model, synthetic_500)[1],
        method="BFGS",
        options={"gtol": 1e-10},
    )
    np.testing.assert_allclose(q.mean, res.x, atol=1e-5)
    assert q.grad_norm < 1e-8
    _, _, hess = log_posterior_unnormalized(q.mean, model, synthetic_500)
    np.testing.assert_allclose(q.covariance @ -hess, np.eye(4), atol=1e-9)


def test_laplace_handles_separated_data():
    data = Dataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), [0, 0, 1, 1])
    q = laplace_approximate(ModelSpec((0,)), data)
    assert np.all(np.isfinite(q.mean)) and q.mean[1] > 0


def test_laplace_non_convergence_reports_diagnostics(synthetic_500):
    from approxloo.inference import LaplaceConfig

    with pytest.raises(ConvergenceError) as info:
        laplace_approximate(ModelSpec((0, 1)), synthetic_500, LaplaceConfig(max_newton_iters=1))
    assert "grad_norm" in info.value.diagnostics


def test_gaussian_log_density_values():
    q = LaplaceApproximation(np.zeros(2), np.eye(2), 0.0, 0.0, np.eye(2))
    assert laplace_log_density(q, np.zeros(2)) == pytest.approx(-1.83787706640934548356, rel=1e-14)
    cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    mean = np.array([0.5, -1.0])
    chol = np.linalg.cholesky(cov)
    q = LaplaceApproximation(mean, cov, float(np.log(np.linalg.det(cov))), 0.0, chol)
    pts = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_allclose(
        laplace_log_density(q, pts), stats.multivariate_normal(mean, cov).logpdf(pts), rtol=1e-12
    )


def test_gaussian_density_integrates_to_one():
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    q = LaplaceApproximation(np.zeros(2), cov, float(np.log(np.linalg.det(cov))), 0.0, np.linalg.cholesky(cov))
    total, _ = integrate.dblquad(
        lambda b, a: np.exp(laplace_log_density(q, np.array([a, b]))), -8, 8, -8, 8
    )
    assert total == pytest.approx(1.0, abs=1e-7)


def test_laplace_samples_match_moments(synthetic_500):
    q = laplace_approximate(ModelSpec((0, 1)), synthetic_500)
    d = sample_from_laplace(q, 40000, seed=5)
    assert d.method_tag == "laplace-sample"
    se = np.sqrt(np.diag(q.covariance) / d.S)
    assert np.all(np.abs(d.mean() - q.mean) < 4 * se)
    scale = np.sqrt(np.outer(np.diag(q.covariance), np.diag(q.covariance)))
    np.testing.assert_allclose(np.cov(d.draws, rowvar=False) / scale, q.covariance / scale, atol=0.03)


def test_intercept_only_posterior_mean_by_quadrature():
    data = Dataset(np.zeros((7, 0)), [1, 0, 0, 1, 1, 1, 0])
    model = ModelSpec(())
    log_post = lambda a: log_posterior_unnormalized([a], model, data)[0]
    mode = laplace_approximate(model, data).mode_log_posterior
    dens = lambda a: np.exp(log_post(a) - mode)
    z, _ = integrate.quad(dens, -15, 15)
    mean, _ = integrate.quad(lambda a: a * dens(a), -15, 15)
    mean /= z
    draws, report = sample_posterior_mcmc(model, data, McmcConfig(iterations=6000, warmup=1000, seed=1))
    assert draws.mean()[0] == pytest.approx(mean, abs=0.05)
    assert report.max_rhat < 1.02


def test_mcmc_agrees_with_laplace_on_well_identified_posterior(synthetic_500):
    model = ModelSpec((0, 1, 2))
    draws, report = sample_posterior_mcmc(model, synthetic_500, McmcConfig(seed=2))
    q = laplace_approximate(model, synthetic_500)
    assert report.max_rhat < 1.05
    assert draws.S == 8000 and draws.chains == 4
    sd = np.sqrt(np.diag(q.covariance))
    assert np.all(np.abs(draws.mean() - q.mean) < 0.2 * sd)


def test_mcmc_rhat_gate(synthetic_500):
    cfg = McmcConfig(chains=2, iterations=40, warmup=20, seed=0, max_rhat=1.0)
    with pytest.raises(ConvergenceError) as info:
        sample_posterior_mcmc(ModelSpec((0,)), synthetic_500, cfg)
    assert "rhat" in info.value.diagnostics


def test_mcmc_custom_init_shape_checked(synthetic_500):
    with pytest.raises(DimensionMismatchError):
        sample_posterior_mcmc(ModelSpec((0,)), synthetic_500, McmcConfig(init=np.zeros((3, 2))))
