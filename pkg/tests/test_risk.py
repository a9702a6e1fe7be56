import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import random_spd

from bayescov import matcore
from bayescov.estimators.posterior import PointMass, iw_posterior, posterior_element_moments, posterior_mean
from bayescov.exceptions import (
    DegenerateFit,
    MomentUndefined,
    ReplicateFailed,
    SingularPosterior,
    UnsupportedLoss,
    UnsupportedPrior,
)
from bayescov.losses import LossSpec
from bayescov.randmat import DiagonalTruth, FixedTruth, FullTruth, IwParams, derive_stream
from bayescov.risk import (
    PriorSpec,
    Scenario,
    exact_prisk,
    frequentist_risk_mc,
    ploss_closed_form,
    ploss_mc,
    prisk_mc,
    rate_fit,
    replicate_losses,
    run_scenario,
    scenario_truth,
    validate_scenario,
)
from bayescov.specialfn import trigamma

FROB = LossSpec("frobenius")
LOGDET = LossSpec("logdet")


def _post(rng, p=3, n=30, nu=5.0):
    s = random_spd(rng, p, 0.5, 2.0)
    return iw_posterior(IwParams(nu, np.eye(p)), n, s)


def test_closed_form_zero_bias(rng):
    post = _post(rng)
    mean, var = posterior_element_moments(post)
    assert ploss_closed_form(post, mean, FROB) == pytest.approx(np.sum(var), rel=1e-12)
    with pytest.raises(UnsupportedLoss):
        ploss_closed_form(post, mean, LossSpec("spectral"))


@pytest.mark.parametrize("loss", [FROB, LOGDET])
def test_closed_form_vs_mc(rng, loss):
    post = _post(rng)
    sigma0 = random_spd(rng, 3, 0.5, 2.0)
    exact = ploss_closed_form(post, sigma0, loss)
    est, se = ploss_mc(post, sigma0, loss, 200_000, derive_stream(31, 0, 0))
    assert abs(est - exact) <= 4 * se


def test_closed_form_scalar_quadrature():
    post = iw_posterior(IwParams(3.0, [[1.0]]), 12, [[1.7]])
    df, b = post.df, post.scale[0, 0]
    law = stats.invgamma(df / 2, scale=b / 2)
    for s0 in (0.5, 1.3, 3.0):
        val, _ = integrate.quad(lambda x: (x - s0) ** 2 * law.pdf(x), 0, np.inf, epsabs=1e-13, epsrel=1e-12)
        assert ploss_closed_form(post, [[s0]], FROB) == pytest.approx(val, rel=1e-8)
        val, _ = integrate.quad(lambda x: (math.log(x) - math.log(s0)) ** 2 * law.pdf(x), 0, np.inf, epsrel=1e-12)
        assert ploss_closed_form(post, [[s0]], LOGDET) == pytest.approx(val, rel=1e-8)


def test_ploss_mc_point_mass():
    est, se = ploss_mc(PointMass(np.eye(3)), 2 * np.eye(3), LossSpec("spectral"), 10, derive_stream(0, 0, 0))
    assert est == 1.0 and se == 0.0


def test_ploss_mc_se_scaling(rng):
    post = _post(rng, p=2)
    sigma0 = np.eye(2)
    small = [ploss_mc(post, sigma0, FROB, 500, derive_stream(32, 0, i))[1] for i in range(20)]
    big = [ploss_mc(post, sigma0, FROB, 2000, derive_stream(32, 1, i))[1] for i in range(20)]
    assert np.mean(big) / np.mean(small) == pytest.approx(0.5, rel=0.3)
    with pytest.raises(ValueError):
        ploss_mc(post, sigma0, FROB, 1, derive_stream(0, 0, 0))


def test_exact_frobenius_scalar_mc():
    # p = 1: S = s0 chi2_n / n, posterior IW_1(n + nu, n S + a)
    n, nu, a, s0 = 15, 3.0, 0.5, 2.0
    chi = np.random.default_rng(33).chisquare(n, size=1_000_000)
    b = s0 * chi + a
    m = n + nu - 1
    ploss = 2 * b * b / ((m - 1) ** 2 * (m - 3)) + (b / (m - 1) - s0) ** 2
    exact = exact_prisk(FROB, [[s0]], n, IwParams(nu, [[a]]))
    se = ploss.std(ddof=1) / math.sqrt(ploss.size)
    assert abs(ploss.mean() - exact) <= 4 * se


def test_exact_frobenius_matrix_mc(rng):
    # exact expectation of the closed-form P-loss over data
    sigma0 = random_spd(rng, 3, 0.5, 2.0)
    prior = IwParams(4.0, 0.5 * np.eye(3))
    sc = Scenario(3, 25, truth=FixedTruth(sigma0), prior=PriorSpec("iw", 4.0, 0.5), loss=FROB, replicates=20_000)
    res = prisk_mc(sc)
    assert abs(res.mean - exact_prisk(FROB, sigma0, 25, prior)) <= 4 * res.se


def test_exact_logdet():
    n, p = 30, 3
    zero = IwParams(0.0, np.zeros((p, p)))
    expected = 2 * sum(trigamma((n - k) / 2) for k in range(p))
    assert exact_prisk(LOGDET, np.eye(p), n, zero) == pytest.approx(expected, rel=1e-13)
    v2 = exact_prisk(LOGDET, np.eye(p), n, IwParams(2.0, np.zeros((p, p))))
    assert v2 == exact_prisk(LOGDET, 5 * np.eye(p), n, IwParams(2.0, np.zeros((p, p))))
    sc = Scenario(p, n, truth=FixedTruth(np.eye(p)), prior=PriorSpec("iw", 2.0), loss=LOGDET, replicates=4000)
    res = prisk_mc(sc)
    assert abs(res.mean - v2) <= 3 * res.se
    with pytest.raises(UnsupportedPrior):
        exact_prisk(LOGDET, np.eye(p), n, IwParams(2.0, np.eye(p)))
    with pytest.raises(MomentUndefined):
        exact_prisk(FROB, np.eye(p), 3, zero)


def test_prisk_matches_exact_identity_truth():
    sc = Scenario(2, 100, truth=FixedTruth(np.eye(2)), prior=PriorSpec("iw", "p"), loss=FROB, replicates=200)
    res = prisk_mc(sc)
    exact = exact_prisk(FROB, np.eye(2), 100, IwParams(2.0, np.zeros((2, 2))))
    assert abs(res.mean - exact) <= 3 * res.se
    assert res.inner_method == "closed_form" and res.inner_draws == 0


def test_logdet_risk_sigma0_free():
    # with a shared data tag the standardized data coincide, so the two losses agree draw by draw
    sc_a = Scenario(3, 40, truth=FixedTruth(np.eye(3)), prior=PriorSpec("iw", 2.0), loss=LOGDET, replicates=50, tag=7)
    sc_b = Scenario(3, 40, truth=FixedTruth(5 * np.eye(3)), prior=PriorSpec("iw", 2.0), loss=LOGDET, replicates=50, tag=7)
    assert prisk_mc(sc_a).mean == pytest.approx(prisk_mc(sc_b).mean, rel=1e-10)


def test_minimal_run_and_mc_method():
    sc = Scenario(3, 20, prior=PriorSpec("iw", "p"), loss=LossSpec("spectral"), replicates=2, posterior_draws=50)
    res = prisk_mc(sc)
    assert np.isfinite(res.se) and res.replicates == 2
    assert res.inner_method == "mc" and res.inner_draws == 50


def test_posterior_mean_p_plus_one_equals_sample_cov():
    base = dict(p=4, n=30, truth=FullTruth(), loss=FROB, replicates=30)
    a = frequentist_risk_mc(Scenario(estimator="posterior_mean", prior=PriorSpec("iw", "p+1"), **base))
    b = frequentist_risk_mc(Scenario(estimator="sample_cov", **base))
    assert a.mean == pytest.approx(b.mean, rel=1e-10)


def test_tapering_beats_sample_cov_on_diagonal_truth():
    base = dict(p=25, n=625, truth=DiagonalTruth(), loss=FROB, replicates=100)
    t = frequentist_risk_mc(Scenario(estimator="tapering", **base))
    s = frequentist_risk_mc(Scenario(estimator="sample_cov", **base))
    assert t.mean <= s.mean + 2 * math.hypot(t.se, s.se)


def test_prisk_dominates_posterior_mean_risk():
    # P-loss = posterior variance + squared bias of the posterior mean, replicate by replicate
    base = dict(p=3, n=40, truth=FullTruth(), prior=PriorSpec("iw", "p", "identity"), loss=FROB, replicates=40)
    a, _ = replicate_losses(Scenario(estimator="posterior", **base))
    b, _ = replicate_losses(Scenario(estimator="posterior_mean", **base))
    assert np.all(a >= b)


def test_logdet_point_estimators():
    base = dict(p=3, n=40, truth=FullTruth(), loss=LOGDET, replicates=30)
    u = frequentist_risk_mc(Scenario(estimator="logdet_umvue", **base))
    bz = frequentist_risk_mc(Scenario(estimator="logdet_bayes", prior=PriorSpec("iw", 0), **base))
    assert u.mean == pytest.approx(bz.mean, rel=1e-10)
    with pytest.raises(UnsupportedLoss):
        validate_scenario(Scenario(3, 40, estimator="logdet_umvue", loss=FROB))


def test_validation_errors():
    with pytest.raises(SingularPosterior):
        validate_scenario(Scenario(5, 3, prior=PriorSpec("iw", 0)))
    with pytest.raises(UnsupportedLoss):
        validate_scenario(Scenario(5, 30, estimator="tapering", loss=LOGDET))
    with pytest.raises(ValueError):
        validate_scenario(Scenario(5, 30, replicates=1))
    with pytest.raises(ValueError):
        validate_scenario(Scenario(5, 30, estimator="oracle"))
    assert validate_scenario(Scenario(4, 6, prior=PriorSpec("mixture", 6, "identity"))) == "exact"


def test_mixture_point_mass_risk_deterministic():
    sigma0 = np.diag([1.0, 2.0, 3.0, 4.0])
    sc = Scenario(4, 6, truth=FixedTruth(sigma0), prior=PriorSpec("mixture", 6, "identity"),
                  loss=LossSpec("spectral"), replicates=5)
    res = run_scenario(sc)
    assert res.mean == pytest.approx(9.0) and res.se == 0.0


def test_truncated_prior_runs():
    sc = Scenario(2, 30, prior=PriorSpec("truncated_iw", "p", "identity", k1=1e-3, k2=1e3),
                  estimator="posterior_mean", loss=FROB, replicates=3, posterior_draws=20)
    res = run_scenario(sc)
    assert res.inner_method == "point_mc" and np.isfinite(res.mean)


def test_replicate_failure_carries_index():
    sc = Scenario(2, 30, prior=PriorSpec("truncated_iw", "p", "identity", k1=50.0, k2=51.0, max_attempts=10),
                  estimator="posterior_mean", loss=FROB, replicates=3, posterior_draws=2)
    with pytest.raises(ReplicateFailed) as info:
        run_scenario(sc)
    assert info.value.index == 0


def test_bit_identical_reruns_and_threads():
    sc = Scenario(5, 50, truth=FullTruth(), prior=PriorSpec("iw", "sqrt(n/p)"), loss=LossSpec("spectral"),
                  replicates=20, posterior_draws=30, base_seed=9)
    a, _ = replicate_losses(sc)
    b, _ = replicate_losses(sc, threads=4)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(scenario_truth(sc), scenario_truth(sc))
    c, _ = replicate_losses(Scenario(**{**sc.__dict__, "base_seed": 10}))
    assert not np.array_equal(a, c)


def test_common_random_numbers_across_estimators():
    # estimators in the same cell see the same truth and data
    base = dict(p=3, n=30, truth=DiagonalTruth(), replicates=2)
    a = Scenario(estimator="sample_cov", **base)
    b = Scenario(estimator="posterior", prior=PriorSpec("iw", "n"), **base)
    assert a.data_tag == b.data_tag
    np.testing.assert_array_equal(scenario_truth(a), scenario_truth(b))


def test_rate_fit_examples():
    ns = [100, 200, 400]
    fit = rate_fit([(n, 7 / n) for n in ns])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12) and fit.r2 == pytest.approx(1.0)
    assert rate_fit([(n, 3 / n**2) for n in ns]).slope == pytest.approx(-2.0, abs=1e-12)
    noise = np.random.default_rng(34).lognormal(0.0, 0.05, size=8)
    ns = [50 * 2**i for i in range(8)]
    assert rate_fit([(n, 5 / n * e) for n, e in zip(ns, noise)]).slope == pytest.approx(-1.0, abs=0.1)


def test_rate_fit_degenerate():
    with pytest.raises(DegenerateFit):
        rate_fit([(1, 1.0), (2, 0.5)])
    with pytest.raises(DegenerateFit):
        rate_fit([(1, 1.0), (2, 0.0), (3, 1.0)])
    with pytest.raises(DegenerateFit):
        rate_fit([(5, 1.0), (5, 2.0), (5, 3.0)])


def test_posterior_mean_stub_zero_risk():
    # a truth equal to the estimate gives zero loss
    s = np.diag([1.0, 2.0])
    post = iw_posterior(IwParams(3.0, np.zeros((2, 2))), 10, s)
    assert FROB(posterior_mean(post), posterior_mean(post)) == 0.0
    assert matcore.frobenius_norm(posterior_mean(post) - s) == pytest.approx(0.0, abs=1e-14)
