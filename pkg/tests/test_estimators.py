import numpy as np
import pytest

from approxloo.datasets import make_synthetic_logistic
from approxloo.estimators import (
    ElpdReport,
    PointwiseLogLik,
    compare_models,
    dic,
    dic_effective_parameters,
    dic_from_draws,
    elpd_is_loo,
    elpd_kfold,
    elpd_loo_exact,
    elpd_psis_loo,
    kfold_assignment,
    loo_refit_pointwise,
    psis_loo_pointwise,
    waic,
)
from approxloo.inference import McmcConfig, sample_posterior_mcmc
from approxloo.model import Dataset, ModelSpec

FAST = McmcConfig(chains=4, iterations=2500, warmup=500, seed=0)


def loglik(rows, provenance="full-posterior-mcmc"):
    return PointwiseLogLik(np.log(np.asarray(rows, dtype=float)), provenance)


def test_is_loo_is_harmonic_mean():
    rep = elpd_is_loo(loglik([[0.5, 0.25]]))
    assert rep.elpd_sum == pytest.approx(-1.09861228866810969140, rel=1e-14)


def test_waic_hand_example():
    rep = waic(loglik([[0.5, 0.25]]))
    assert rep.elpd_sum == pytest.approx(-1.22105575997082694919, rel=1e-14)
    assert rep.penalty == pytest.approx(np.log(2) ** 2 / 2)


def test_dic_hand_example():
    ll = PointwiseLogLik(np.array([[-0.6, -0.4], [-1.2, -0.9]]))
    at_mean = np.array([-0.5, -1.0])
    p_e = dic_effective_parameters(ll, at_mean)
    assert p_e == pytest.approx(0.1)
    assert dic(at_mean, p_e).elpd_sum == pytest.approx(-1.6)


def test_report_scales_and_se():
    rep = elpd_is_loo(loglik([[0.5, 0.5], [0.25, 0.25], [0.125, 0.125]]))
    pw = np.log([0.5, 0.25, 0.125])
    assert rep.elpd_sum == pytest.approx(pw.sum())
    assert rep.elpd_avg == pytest.approx(pw.mean())
    assert rep.se_loo == pytest.approx(np.sqrt(3 * np.var(pw)))
    np.testing.assert_array_equal(rep.observation_index, [0, 1, 2])


@pytest.mark.parametrize("fn", [elpd_is_loo, waic, elpd_psis_loo])
def test_full_posterior_estimators_reject_approximate_draws(fn):
    with pytest.raises(ValueError):
        fn(loglik(np.full((2, 30), 0.5), "laplace-sample"))


def test_pointwise_loglik_validation():
    with pytest.raises(ValueError):
        PointwiseLogLik(np.array([[0.0, np.nan]]))
    with pytest.raises(ValueError):
        PointwiseLogLik(np.zeros((1, 2)), "vi")


def test_psis_equals_is_for_light_tails():
    rng = np.random.default_rng(0)
    ll = PointwiseLogLik(-np.abs(rng.normal(0.7, 0.02, size=(5, 4000))))
    psis = elpd_psis_loo(ll)
    is_ = elpd_is_loo(ll)
    assert psis.elpd_sum == pytest.approx(is_.elpd_sum, abs=1e-4)
    assert psis.n_high_khat == 0


def test_psis_refit_replaces_unreliable_rows():
    rng = np.random.default_rng(1)
    good = -np.abs(rng.normal(0.7, 0.05, size=(3, 4000)))
    bad = -np.log(rng.pareto(1.1, size=4000) + 1.0) * 3.0
    ll = PointwiseLogLik(np.vstack([good, bad]))
    plain = elpd_psis_loo(ll)
    assert plain.khat[3] > 0.7 and plain.n_refits == 0
    rep = elpd_psis_loo(ll, refit=lambda i: -42.0)
    assert rep.n_refits == 1 and rep.pointwise[3] == -42.0
    np.testing.assert_array_equal(rep.pointwise[:3], plain.pointwise[:3])


def test_psis_pointwise_rows_and_weights():
    rng = np.random.default_rng(2)
    ll = PointwiseLogLik(-rng.exponential(0.5, size=(6, 500)))
    full, khat, _ = psis_loo_pointwise(ll)
    part, khat_part, _, w = psis_loo_pointwise(ll, rows=[4, 1], return_weights=True)
    np.testing.assert_array_equal(part, full[[4, 1]])
    np.testing.assert_array_equal(khat_part, khat[[4, 1]])
    np.testing.assert_allclose(np.exp(w).sum(axis=1), 1.0)


def test_corrected_psis_with_exact_density_matches_plain():
    rng = np.random.default_rng(3)
    ll = -rng.exponential(0.5, size=(4, 600))
    lp = rng.normal(size=600)
    plain = elpd_psis_loo(PointwiseLogLik(ll))
    corrected = elpd_psis_loo(PointwiseLogLik(ll, "laplace-sample"), lp, lp.copy())
    np.testing.assert_array_equal(plain.pointwise, corrected.pointwise)


def test_kfold_assignment_balanced_and_seeded():
    folds = kfold_assignment(23, 5, seed=4)
    counts = np.bincount(folds, minlength=5)
    assert counts.max() - counts.min() <= 1 and counts.sum() == 23
    np.testing.assert_array_equal(folds, kfold_assignment(23, 5, seed=4))
    assert not np.array_equal(folds, kfold_assignment(23, 5, seed=5))
    with pytest.raises(ValueError):
        kfold_assignment(5, 6, seed=0)


def test_exact_loo_two_observations_against_quadrature():
    # log p(y_i | y_{-i}) by 2-d quadrature over the N(0, 2.5^2) prior
    data = Dataset(np.array([[0.5], [-1.0]]), [1, 0])
    rep = elpd_loo_exact(ModelSpec((0,)), data, McmcConfig(iterations=5000, warmup=1000, seed=3))
    exact = np.array([-0.86077994198893, -0.86077994198891])
    np.testing.assert_allclose(rep.pointwise, exact, atol=0.02)
    assert rep.n_refits == 2
    assert np.all(np.abs(rep.pointwise - exact) < 3 * rep.pointwise_mcse)


def test_exact_loo_needs_two_observations():
    with pytest.raises(ValueError):
        elpd_loo_exact(ModelSpec(()), Dataset(np.zeros((1, 0)), [1]))


def test_refit_is_deterministic():
    data = make_synthetic_logistic(30, [0.0, 1.0], seed=2)
    a = loo_refit_pointwise(ModelSpec((0,)), data, 3, FAST)
    b = loo_refit_pointwise(ModelSpec((0,)), data, 3, FAST)
    assert a == b


def test_kfold_with_k_equal_n_matches_exact_loo():
    data = make_synthetic_logistic(20, [0.2, 1.0], seed=8)
    model = ModelSpec((0,))
    loo = elpd_loo_exact(model, data, FAST)
    kf = elpd_kfold(model, data, K=20, config=FAST, seed=0)
    tol = 4 * np.sqrt(np.sum(loo.pointwise_mcse**2 + kf.pointwise_mcse**2))
    assert abs(kf.elpd_sum - loo.elpd_sum) < max(tol, 0.05)
    assert kf.n_refits == 20


def test_kfold_parallel_matches_serial():
    data = make_synthetic_logistic(40, [0.2, 1.0], seed=9)
    cfg = McmcConfig(chains=2, iterations=600, warmup=300, seed=1)
    a = elpd_kfold(ModelSpec((0,)), data, K=4, config=cfg, seed=2)
    b = elpd_kfold(ModelSpec((0,)), data, K=4, config=cfg, seed=2, n_jobs=3)
    np.testing.assert_array_equal(a.pointwise, b.pointwise)


def test_psis_tracks_exact_loo_on_small_data():
    data = make_synthetic_logistic(40, [-0.3, 1.0, -0.5], seed=10)
    model = ModelSpec((0, 1))
    draws, _ = sample_posterior_mcmc(model, data, McmcConfig(seed=4))
    psis = elpd_psis_loo(PointwiseLogLik.from_draws(draws, model, data))
    loo = elpd_loo_exact(model, data, McmcConfig(seed=5))
    assert np.median(np.abs(psis.pointwise - loo.pointwise)) < 0.02


def test_dic_from_draws_penalty_near_parameter_count(synthetic_500):
    model = ModelSpec((0, 1, 2))
    draws, _ = sample_posterior_mcmc(model, synthetic_500, McmcConfig(seed=6))
    rep = dic_from_draws(draws, model, synthetic_500)
    assert 3.0 < rep.penalty < 5.0


def _fake(values, name):
    v = np.asarray(values, dtype=float)
    return ElpdReport("psis_loo", v.sum(), v.mean(), 0.0, v, v.shape[0], np.arange(v.shape[0]), model=name)


def test_compare_models_pairs_and_se():
    a = _fake([-1.0, -2.0, -0.5], "A")
    b = _fake([-1.5, -1.0, -0.7], "B")
    c = _fake([-1.0, -2.0, -0.5], "C")
    rows = compare_models([a, b, c])
    assert len(rows) == 6
    ab = next(r for r in rows if (r.model_a, r.model_b) == ("A", "B"))
    ba = next(r for r in rows if (r.model_a, r.model_b) == ("B", "A"))
    d = np.array([0.5, -1.0, 0.2])
    assert ab.elpd_diff == pytest.approx(d.sum())
    assert ab.se_diff == pytest.approx(np.sqrt(3 * np.var(d)))
    assert ba.elpd_diff == -ab.elpd_diff and ba.se_diff == ab.se_diff
    ac = next(r for r in rows if (r.model_a, r.model_b) == ("A", "C"))
    assert ac.elpd_diff == 0.0 and ac.se_diff == 0.0


def test_compare_models_rejects_mismatched_observations():
    with pytest.raises(ValueError):
        compare_models([_fake([-1.0, -2.0], "A"), _fake([-1.0], "B")])
