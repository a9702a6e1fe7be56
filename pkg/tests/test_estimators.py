import math

import numpy as np
import pytest
from sklearn.base import clone

from conftest import random_spd

from bayescov import matcore
from bayescov.estimators import (
    InverseWishartCovariance,
    LogDetEstimator,
    MixturePriorCovariance,
    SampleCovariance,
    TaperingCovariance,
    TruncatedInverseWishartCovariance,
)
from bayescov.estimators.posterior import (
    NuRule,
    PointMass,
    default_taper_k,
    iw_posterior,
    logdet_point_estimate,
    logdet_posterior_moments,
    mixture_posterior,
    posterior_element_moments,
    posterior_mean,
    tapering_estimator,
    tapering_weights,
    truncated_posterior_mean_mc,
)
from bayescov.exceptions import MomentUndefined, NotPositiveDefinite, OddK, SingularPosterior
from bayescov.randmat import IwParams, TruncIwParams, derive_stream, sample_mvn
from bayescov.specialfn import digamma, trigamma


def test_iw_posterior_update():
    post = iw_posterior(IwParams(3.0, np.eye(2)), 10, np.eye(2))
    assert post.df == 13.0
    np.testing.assert_allclose(post.scale, 11 * np.eye(2))
    np.testing.assert_allclose(posterior_mean(post), 1.1 * np.eye(2))


def test_jeffreys_and_sample_covariance_as_bayes(rng):
    s = random_spd(rng, 3, 0.5, 2.0)
    post = iw_posterior(IwParams(1.0, np.zeros((3, 3))), 20, s)
    assert post.df == 21.0
    np.testing.assert_allclose(post.scale, 20 * s)
    post = iw_posterior(IwParams(4.0, np.zeros((3, 3))), 20, s)
    np.testing.assert_allclose(posterior_mean(post), s, rtol=1e-13)


def test_singular_posterior():
    x = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    s = x.T @ x / 2
    with pytest.raises(SingularPosterior):
        iw_posterior(IwParams(0.0, np.zeros((3, 3))), 2, s)


def test_element_moments_scalar():
    post = iw_posterior(IwParams(4.0, [[2.0]]), 10, [[1.5]])
    nu, b = post.df, post.scale[0, 0]
    mean, var = posterior_element_moments(post)
    assert mean[0, 0] == pytest.approx(b / (nu - 2))
    assert var[0, 0] == pytest.approx(2 * b * b / ((nu - 2) ** 2 * (nu - 4)), rel=1e-13)


def test_element_moments_vs_mc():
    a = np.array([[2.0, 0.6], [0.6, 1.0]])
    post = iw_posterior(IwParams(4.0, np.eye(2)), 10, a)
    mean, var = posterior_element_moments(post)
    draws = post.sample(derive_stream(21, 0, 0), 200_000)
    np.testing.assert_allclose(mean, posterior_mean(post))
    mc_var = draws.var(axis=0, ddof=1)
    # SE of a variance estimate from the fourth central moment
    c = draws - draws.mean(axis=0)
    se = np.sqrt(((c**4).mean(axis=0) - mc_var**2) / draws.shape[0])
    assert np.all(np.abs(mc_var - var) <= 5 * se)


def test_element_moments_undefined():
    post = iw_posterior(IwParams(0.0, np.zeros((2, 2))), 5, np.eye(2))
    assert post.df - post.p == 3
    with pytest.raises(MomentUndefined):
        posterior_element_moments(post)


def test_mixture_branches():
    prior = IwParams(4.0, np.eye(4))
    mix = mixture_posterior(prior, 0.5, 6, 4, np.eye(4))
    assert mix.is_point_mass
    np.testing.assert_array_equal(mix.branch.matrix, np.eye(4))
    mix = mixture_posterior(IwParams(2.0, np.eye(2)), 0.5, 10, 2, np.eye(2))
    assert not mix.is_point_mass
    with pytest.raises(ValueError):
        mixture_posterior(prior, 1.0, 6, 4, np.eye(4))


def test_point_mass_samples():
    pm = PointMass(2 * np.eye(2))
    d = pm.sample(derive_stream(0, 0, 0), 3)
    assert d.shape == (3, 2, 2)
    np.testing.assert_array_equal(d[1], 2 * np.eye(2))


def test_tapering():
    s = random_spd(np.random.default_rng(3), 5, 0.5, 2.0)
    np.testing.assert_array_equal(tapering_estimator(s, 10), s)
    w = tapering_weights(3, 2)
    np.testing.assert_array_equal(w, [[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    w = tapering_weights(12, 6)
    row = w[0]
    assert row[0] == 1.0 and np.all(np.diff(row) <= 0)
    np.testing.assert_allclose(row[:7], [1, 1, 1, 1, 2 / 3, 1 / 3, 0])
    with pytest.raises(OddK):
        tapering_weights(3, 3)
    assert default_taper_k(625) == 26
    assert default_taper_k(100) == 10
    assert default_taper_k(1) == 2


def test_logdet_moments_scalar():
    post = iw_posterior(IwParams(3.0, [[1.0]]), 10, [[2.0]])
    nu, b = post.df, post.scale[0, 0]
    mean, var = logdet_posterior_moments(post)
    assert mean == pytest.approx(math.log(b) - digamma(nu / 2) - math.log(2), rel=1e-13)
    assert var == pytest.approx(trigamma(nu / 2), rel=1e-13)


def test_logdet_moments_vs_mc_and_display():
    a = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.0], [0.1, 0.0, 1.5]])
    n = 40
    prior = IwParams(5.0, np.eye(3))
    post = iw_posterior(prior, n, a)
    mean, var = logdet_posterior_moments(post)
    # mean rewritten as log det(S + A/n) + p log(n/2) - sum psi
    display = (
        matcore.log_det(a + prior.scale / n) + 3 * math.log(n / 2)
        - sum(digamma((n + prior.df - k) / 2) for k in range(3))
    )
    assert mean == pytest.approx(display, abs=1e-10)
    ld = np.sum(np.log(matcore.eigvalsh(post.sample(derive_stream(22, 0, 0), 100_000))), axis=1)
    se_mean = ld.std(ddof=1) / math.sqrt(ld.size)
    assert abs(ld.mean() - mean) <= 4 * se_mean
    se_var = math.sqrt((np.mean((ld - ld.mean()) ** 4) - ld.var() ** 2) / ld.size)
    assert abs(ld.var(ddof=1) - var) <= 4 * se_var
    assert var > 0


def test_umvue_value():
    assert logdet_point_estimate("umvue", [[2.0]], 10) == pytest.approx(0.796467, abs=1e-6)
    assert logdet_point_estimate("umvue", [[2.0]], 10) == pytest.approx(
        math.log(10) - (-0.5772156649015329 + 25 / 12), abs=1e-12
    )
    assert logdet_point_estimate("mle", np.diag([2.0, 3.0]), 10) == pytest.approx(math.log(6))


def test_bayes_zero_prior_equals_umvue(rng):
    s = random_spd(rng, 4, 0.5, 3.0)
    for n in (5, 12, 80):
        u = logdet_point_estimate("umvue", s, n)
        b = logdet_point_estimate("bayes", s, n, IwParams(0.0, np.zeros((4, 4))))
        assert b == pytest.approx(u, abs=1e-12)


def test_umvue_requires_n_ge_p():
    with pytest.raises(NotPositiveDefinite):
        logdet_point_estimate("umvue", np.eye(3), 2)
    with pytest.raises(ValueError):
        logdet_point_estimate("median", np.eye(3), 5)


def test_truncated_mean_wide_window():
    post = iw_posterior(IwParams(4.0, np.eye(2)), 30, np.array([[1.5, 0.2], [0.2, 1.0]]))
    params = TruncIwParams(post.params, 1e-6, 1e6)
    mean, se = truncated_posterior_mean_mc(params, 20_000, derive_stream(23, 0, 0))
    assert np.all(np.abs(mean - posterior_mean(post)) <= 4 * se)
    tight = TruncIwParams(post.params, 0.9, 1.6)
    mean, _ = truncated_posterior_mean_mc(tight, 200, derive_stream(23, 0, 1))
    w = matcore.eigvalsh(mean)
    assert w.min() >= 0.9 and w.max() <= 1.6
    mean, se = truncated_posterior_mean_mc(params, 1, derive_stream(23, 0, 2))
    assert np.all(np.isnan(se))


def test_nu_rule():
    assert NuRule.parse("sqrt(n/p)").resolve(100, 4) == 5.0
    assert NuRule.parse("p+1").resolve(10, 3) == 4.0
    assert NuRule.parse(2).label == "2"
    assert NuRule.parse("0").kind == "zero"
    with pytest.raises(ValueError):
        NuRule.parse("banana")


# sklearn wrappers -----------------------------------------------------------


def _data(p=3, n=50, seed=24):
    sigma = np.diag(np.arange(1.0, p + 1))
    return sample_mvn(derive_stream(seed, 0, 0), sigma, n)


def test_sample_covariance_estimator():
    x = _data()
    est = SampleCovariance().fit(x)
    np.testing.assert_allclose(est.covariance_, x.T @ x / x.shape[0])
    assert est.error_norm(est.covariance_) == 0.0


def test_iw_estimator_matches_functions():
    x = _data()
    est = InverseWishartCovariance(nu="p+1").fit(x)
    np.testing.assert_allclose(est.covariance_, x.T @ x / 50, rtol=1e-12)
    est = InverseWishartCovariance(nu=5, prior_scale="identity").fit(x)
    np.testing.assert_allclose(est.covariance_, (x.T @ x + np.eye(3)) / (50 + 5 - 4))
    draws = est.sample(4, random_state=1)
    assert draws.shape == (4, 3, 3)
    np.testing.assert_array_equal(draws, est.sample(4, random_state=1))
    mean, var = est.logdet_moments()
    assert var > 0 and np.isfinite(mean)


def test_sklearn_params_and_clone():
    est = InverseWishartCovariance(nu="sqrt(n/p)", prior_scale=2.0)
    assert est.get_params() == {"nu": "sqrt(n/p)", "prior_scale": 2.0}
    c = clone(est).set_params(nu=3)
    assert c.nu == 3 and est.nu == "sqrt(n/p)"
    for cls in (SampleCovariance, MixturePriorCovariance, TruncatedInverseWishartCovariance, TaperingCovariance, LogDetEstimator):
        clone(cls())


def test_mixture_estimator():
    x = _data(p=4, n=6)
    est = MixturePriorCovariance(nu=6).fit(x)
    np.testing.assert_array_equal(est.covariance_, np.eye(4))
    est = MixturePriorCovariance(nu=6).fit(_data(p=2, n=10))
    assert not est.posterior_.is_point_mass


def test_tapering_estimator_class():
    x = _data(p=6, n=16)
    est = TaperingCovariance().fit(x)
    assert est.k_ == 4
    np.testing.assert_allclose(est.covariance_, tapering_estimator(x.T @ x / 16, 4))


def test_truncated_estimator():
    x = _data(p=2, n=40)
    est = TruncatedInverseWishartCovariance(nu=4, k1=1e-6, k2=1e6, n_draws=5000, random_state=3).fit(x)
    ref = InverseWishartCovariance(nu=4, prior_scale="identity").fit(x).covariance_
    assert np.all(np.abs(est.covariance_ - ref) <= 4 * est.covariance_se_)


def test_logdet_estimator():
    x = _data(p=3, n=30)
    u = LogDetEstimator().fit(x).logdet_
    b = LogDetEstimator(method="bayes", nu=0).fit(x).logdet_
    assert u == pytest.approx(b, abs=1e-12)
    m = LogDetEstimator(method="mle").fit(x).logdet_
    assert m == pytest.approx(matcore.log_det(x.T @ x / 30))


def test_input_validation():
    with pytest.raises(ValueError):
        SampleCovariance().fit(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        SampleCovariance().fit(np.ones(3))
