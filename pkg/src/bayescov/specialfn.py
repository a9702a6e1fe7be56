"""Log-gamma, digamma and trigamma on the positive real axis.

Each function shifts its argument upward with the standard recurrence until it
exceeds ``SHIFT``, then evaluates the Bernoulli-number asymptotic series.
All functions accept scalars or arrays and return the same kind.
"""

import math
from contextlib import contextmanager

import numpy as np

from .exceptions import DomainError

SHIFT = 10.0

# B_{2k} / (2k (2k - 1)) for the Stirling series of log-gamma
_LGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
# B_{2k} / (2k) for digamma
_DIGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2k} for trigamma
_TRIGAMMA_COEF = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# test hook: additive perturbation of digamma used by fault-injection checks
_digamma_fault = 0.0


def _prepare(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _finish(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


def _series(z2inv, coef):
    acc = np.zeros_like(z2inv)
    for c in reversed(coef):
        acc = acc * z2inv + c
    return acc


def lgamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = _prepare(x, "lgamma")
    z = arr.copy()
    # the shifted-off factors are accumulated as a product, logged once
    prod = np.ones_like(z)
    logs = np.zeros_like(z)
    while np.any(small := z < SHIFT):
        prod = np.where(small, prod * z, prod)
        z = np.where(small, z + 1.0, z)
        big = prod > 1e250
        if np.any(big):
            logs = np.where(big, logs + np.log(prod), logs)
            prod = np.where(big, 1.0, prod)
    zinv = 1.0 / z
    tail = zinv * _series(zinv * zinv, _LGAMMA_COEF)
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + tail - np.log(prod) - logs
    return _finish(x, out)


def digamma(x):
    """Digamma function, the derivative of :func:`lgamma`."""
    arr = _prepare(x, "digamma")
    z = arr.copy()
    acc = np.zeros_like(z)
    while np.any(small := z < SHIFT):
        acc = np.where(small, acc - 1.0 / z, acc)
        z = np.where(small, z + 1.0, z)
    z2inv = 1.0 / (z * z)
    out = acc + np.log(z) - 0.5 / z - z2inv * _series(z2inv, _DIGAMMA_COEF)
    return _finish(x, out + _digamma_fault)


def trigamma(x):
    """Trigamma function, the derivative of :func:`digamma`."""
    arr = _prepare(x, "trigamma")
    z = arr.copy()
    acc = np.zeros_like(z)
    while np.any(small := z < SHIFT):
        acc = np.where(small, acc + 1.0 / (z * z), acc)
        z = np.where(small, z + 1.0, z)
    zinv = 1.0 / z
    z2inv = zinv * zinv
    out = acc + zinv + 0.5 * z2inv + zinv * z2inv * _series(z2inv, _TRIGAMMA_COEF)
    return _finish(x, out)


@contextmanager
def digamma_fault(delta: float):
    """Temporarily add ``delta`` to every digamma value (verification fault injection)."""
    global _digamma_fault
    saved = _digamma_fault
    _digamma_fault = float(delta)
    try:
        yield
    finally:
        _digamma_fault = saved
