import math

import numpy as np
import pytest

from conftest import random_spd

from bayescov import losses, matcore
from bayescov.exceptions import DomainError, NotPositiveDefinite, UnsupportedLoss
from bayescov.losses import LossSpec, PhiSpec


def test_spectral_examples():
    a = random_spd(np.random.default_rng(0), 3, 0.5, 2.0)
    assert losses.sq_spectral_loss(a, a) == 0.0
    assert losses.sq_spectral_loss(2 * np.eye(3), np.eye(3), 2) == pytest.approx(1.0)
    assert losses.sq_spectral_loss(np.diag([1.0, 5.0]), np.diag([2.0, 3.0]), 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        losses.sq_spectral_loss(a, a, 3)


def test_frobenius_examples():
    assert losses.sq_frobenius_loss(np.eye(2), np.eye(2)) == 0.0
    assert losses.sq_frobenius_loss(np.eye(2), np.zeros((2, 2))) == pytest.approx(2.0)
    assert losses.sq_frobenius_loss(np.diag([3.0, 4.0]), np.zeros((2, 2)), scale=0.5) == pytest.approx(12.5)


def test_stein_examples(rng):
    a = random_spd(rng, 4, 0.5, 3.0)
    assert abs(losses.bregman_divergence(PhiSpec("stein"), a, a)) < 1e-12
    for p in (1, 3, 6):
        expected = p * (1 - math.log(2))
        assert losses.bregman_divergence(PhiSpec("stein"), 2 * np.eye(p), np.eye(p)) == pytest.approx(expected, rel=1e-12)
        assert losses.stein_loss(2 * np.eye(p), np.eye(p)) == pytest.approx(expected, rel=1e-12)


def test_von_neumann_examples():
    assert abs(losses.von_neumann_divergence(np.eye(3), np.eye(3))) < 1e-14
    assert losses.von_neumann_divergence(np.diag([math.e, 1.0]), np.eye(2)) == pytest.approx(1.0, rel=1e-12)


def test_generic_bregman_matches_closed_forms(rng):
    for _ in range(20):
        p = int(rng.integers(1, 6))
        a = random_spd(rng, p, 0.3, 4.0)
        b = random_spd(rng, p, 0.3, 4.0)
        g = losses.bregman_divergence(PhiSpec("squared_euclid"), a, b)
        assert g == pytest.approx(losses.sq_frobenius_loss(a, b), abs=1e-10)
        g = losses.bregman_divergence(PhiSpec("von_neumann"), a, b)
        assert g == pytest.approx(losses.von_neumann_divergence(a, b), rel=1e-9)
        g = losses.bregman_divergence(PhiSpec("stein"), a, b)
        assert g == pytest.approx(losses.stein_loss(a, b), rel=1e-9)
        assert g >= 0


def test_bregman_domain_error():
    with pytest.raises(DomainError):
        losses.bregman_divergence(PhiSpec("stein"), np.diag([1.0, -1.0]), np.eye(2))


def test_custom_phi():
    phi = PhiSpec("custom", phi=lambda x: x**3, dphi=lambda x: 3 * x**2, domain_low=0.0)
    a, b = np.diag([2.0, 1.0]), np.eye(2)
    # 8 + 1 - 2 - 3 * 1 = 4
    assert losses.bregman_divergence(phi, a, b) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        PhiSpec("custom", phi=lambda x: x**3, dphi=lambda x: 2 * x**2)
    with pytest.raises(ValueError):
        PhiSpec("custom", phi=lambda x: -x * x, dphi=lambda x: -2 * x)
    with pytest.raises(ValueError):
        PhiSpec("custom", phi=lambda x: x)


def test_logdet_examples():
    assert losses.sq_logdet_loss(np.eye(2), np.eye(2)) == 0.0
    assert losses.sq_logdet_loss(2 * np.eye(2), np.eye(2)) == pytest.approx((2 * math.log(2)) ** 2)
    assert losses.sq_logdet_loss([[math.exp(3.0)]], [[1.0]]) == pytest.approx(9.0)


def test_precision_examples(rng):
    assert losses.sq_spectral_precision_loss(np.eye(2), np.eye(2)) == 0.0
    assert losses.sq_spectral_precision_loss([[2.0]], [[1.0]]) == pytest.approx(0.25)
    a = random_spd(rng, 4, 0.5, 3.0)
    b = random_spd(rng, 4, 0.5, 3.0)
    direct = losses.sq_spectral_loss(np.linalg.inv(a), np.linalg.inv(b))
    assert losses.sq_spectral_precision_loss(a, b) == pytest.approx(direct, rel=1e-10)
    with pytest.raises(NotPositiveDefinite):
        losses.sq_spectral_precision_loss(np.diag([1.0, -1.0]), np.eye(2))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        losses.sq_frobenius_loss(np.eye(2), np.eye(3))


def test_loss_spec():
    with pytest.raises(UnsupportedLoss):
        LossSpec("nuclear")
    with pytest.raises(ValueError):
        LossSpec("frobenius", scale=0.0)
    assert LossSpec("bregman").label == "bregman_stein"
    spec = LossSpec("frobenius", scale=0.5)
    assert spec(np.diag([3.0, 4.0]), np.zeros((2, 2))) == pytest.approx(12.5)
    assert LossSpec("frobenius", power=1)(np.diag([3.0, 4.0]), np.zeros((2, 2))) == pytest.approx(5.0)


@pytest.mark.parametrize("family", ["spectral", "frobenius", "bregman", "logdet", "spectral_precision"])
@pytest.mark.parametrize("power", [1, 2])
def test_loss_batch_matches_single(rng, family, power):
    spec = LossSpec(family, power=power, scale=0.7)
    truth = random_spd(rng, 3, 0.5, 2.0)
    draws = np.stack([random_spd(rng, 3, 0.5, 2.0) for _ in range(5)])
    batch = losses.loss_batch(spec, draws, truth)
    single = [spec(d, truth) for d in draws]
    np.testing.assert_allclose(batch, single, rtol=1e-10)


def test_bregman_invariance_under_congruence(rng):
    # Stein loss is invariant under A, B -> G A G^T
    a = random_spd(rng, 3, 0.5, 2.0)
    b = random_spd(rng, 3, 0.5, 2.0)
    g = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    ga, gb = matcore.symmetrize(g @ a @ g.T), matcore.symmetrize(g @ b @ g.T)
    assert losses.stein_loss(ga, gb) == pytest.approx(losses.stein_loss(a, b), rel=1e-8)
