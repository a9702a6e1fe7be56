import numpy as np
import pytest


def random_spd(rng, p, low=0.5, high=3.0):
    """SPD matrix with eigenvalues uniform in [low, high]."""
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = rng.uniform(low, high, p)
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
