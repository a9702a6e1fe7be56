"""Finite-n lower-bound calculators and verifiers for covariance estimation.

Covers the chi-square mixture statistic ``xi`` of the hypercube two-point
construction, Le Cam's two-point bound, the spectral-norm and Frobenius
(Assouad) lower bounds, the Gaussian KL divergence, the chi-square affinity
of three centred Gaussians, the log-det remainder and empirical Wishart
eigenvalue tail checks.
"""

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import List, Optional

import numpy as np

from . import matcore, randmat
from .exceptions import (
    ConditionViolated,
    ConstraintViolated,
    DomainError,
    InvalidDf,
    NotPositiveDefinite,
    TooLarge,
)
from .randmat import SeedStream, WishartParams
from .specialfn import lgamma

BRUTEFORCE_MAX_P = 12
C1_MAX = 1.0 / 3.0


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    if not np.isfinite(m):
        return m
    return m + math.log(math.fsum(np.exp(x - m)))


def _binom_logweights(p: int) -> np.ndarray:
    """``log(C(p, b) 2^-p)`` for ``b = 0..p``."""
    b = np.arange(p + 1, dtype=float)
    if p <= 1000:
        logc = np.array([math.log(math.comb(p, int(k))) for k in b])
    else:
        logc = lgamma(p + 1.0) - lgamma(b + 1.0) - lgamma(p - b + 1.0)
    return logc - p * math.log(2.0)


def log_xi_exact(p: int, n: float, eps: float) -> float:
    """Natural log of :func:`xi_exact`."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    b = np.arange(p + 1, dtype=float)
    x = 2.0 * b / p - 1.0
    terms = _binom_logweights(p) - 0.5 * n * np.log1p(-(eps * eps) * x * x)
    return _logsumexp(terms)


def xi_exact(p: int, n: float, eps: float) -> float:
    """Chi-square mixture statistic of the hypercube construction.

    ``xi = sum_b C(p, b) 2^-p (1 - eps^2 (2b/p - 1)^2)^(-n/2)``, the average of
    ``(1 - eps^2 <u, v>^2)^(-n/2)`` over independent uniform ``u, v`` in
    ``{+-1/sqrt(p)}^p``. Evaluated with log-sum-exp, so large ``p`` is safe;
    returns ``inf`` when the value overflows.
    """
    lx = log_xi_exact(p, n, eps)
    return math.exp(lx) if lx < 709.0 else math.inf


def xi_bruteforce(p: int, n: float, eps: float) -> float:
    """:func:`xi_exact` by enumerating all ``4^p`` sign-vector pairs (``p <= 12``)."""
    if p > BRUTEFORCE_MAX_P:
        raise TooLarge(f"brute force enumerates 4^p pairs; p={p} exceeds {BRUTEFORCE_MAX_P}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    codes = np.arange(2**p)[:, None] >> np.arange(p) & 1
    u = (2.0 * codes - 1.0) / math.sqrt(p)
    g = u @ u.T
    return float(np.mean((1.0 - eps * eps * g * g) ** (-0.5 * n)))


def xi_limit_eps(p: int, n: float, a: float) -> float:
    """``eps`` with ``n eps^2 = 2 a p``, so the ``xi`` exponent is ``a p (2B/p - 1)^2`` to first order.

    With this choice ``xi -> (1 - 2a)^(-1/2)`` as ``p`` grows (``0 < a < 1/2``).
    """
    if not 0.0 < a < 0.5:
        raise ValueError("a must lie in (0, 1/2)")
    return math.sqrt(2.0 * a * p / n)


def lecam_two_point(theta0: float, theta1: float, xi: float) -> float:
    """Le Cam two-point bound ``(theta1 - theta0)^2 / (1 + sqrt(xi))^2``."""
    if not xi >= 1.0:
        raise DomainError(f"xi must be at least 1, got {xi}")
    if math.isinf(xi):
        return 0.0
    return (theta1 - theta0) ** 2 / (1.0 + math.sqrt(xi)) ** 2


def spectral_lower_bound(p: int, n: int, tau1: float, tau2: float, c: float) -> float:
    """Finite-n spectral-norm lower bound ``tau2^2 eps^2 / (4 (1 + sqrt(xi))^2)``.

    ``eps = c sqrt(p_eff / n)`` with ``p_eff = min(p, n)``; when ``p > n`` the
    construction lives on an ``n``-dimensional block, so the bound stops
    depending on ``p``.

    Raises
    ------
    ConstraintViolated
        If ``eps >= 1`` or ``eps > tau2 / tau1 - 1``; ``max_c`` holds the
        largest admissible ``c`` (exclusive when the first constraint binds).
    """
    if not 0.0 < tau1 < tau2:
        raise ValueError(f"need 0 < tau1 < tau2, got ({tau1}, {tau2})")
    if not c > 0.0:
        raise ValueError("c must be positive")
    p_eff = min(p, n)
    scale = math.sqrt(p_eff / n)
    eps = c * scale
    cap = min(1.0, tau2 / tau1 - 1.0)
    if eps >= 1.0 or eps > tau2 / tau1 - 1.0:
        raise ConstraintViolated(
            f"eps = c sqrt(p/n) = {eps:.4g} violates eps < 1 and eps <= tau2/tau1 - 1 = {tau2 / tau1 - 1:.4g}; "
            f"need c <= {cap / scale:.4g}",
            max_c=cap / scale,
        )
    lx = log_xi_exact(p_eff, n, eps)
    root = math.exp(0.5 * lx) if lx < 1400.0 else math.inf
    return tau2 * tau2 * eps * eps / (4.0 * (1.0 + root) ** 2)


def gaussian_kl(sigma_prime, sigma, n: float = 1) -> float:
    """``KL(N(0, sigma')^n || N(0, sigma)^n) = (n/2) [tr(sigma' sigma^-1) - log det(sigma' sigma^-1) - p]``."""
    sp = matcore.as_spd(sigma_prime)
    s = matcore.as_spd(sigma)
    matcore.check_same_shape(sp, s)
    low = matcore.cholesky(s)
    linv = matcore.inv_lower_triangular(low)
    tr = float(np.sum((linv @ sp) * linv))
    value = tr - matcore.log_det(sp) + matcore.log_det(s) - s.shape[0]
    return max(0.0, 0.5 * n * value)


@dataclass(frozen=True)
class HypercubeSpec:
    """Hypercube construction for the Frobenius lower bound.

    ``k = min(p, floor(sqrt(n)))`` is the band width and
    ``c2 = tau / (1 + c1)`` the perturbation scale.
    """

    p: int
    n: int
    tau: float = 1.0
    c1: float = C1_MAX

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise ValueError("p and n must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.c1 <= C1_MAX:
            raise ConstraintViolated(f"c1 must lie in (0, 1/3], got {self.c1}", max_c=C1_MAX)

    @property
    def k(self) -> int:
        return min(self.p, math.isqrt(self.n))

    @property
    def c2(self) -> float:
        return self.tau / (1.0 + self.c1)

    @property
    def flip_kl(self) -> float:
        """Exact KL between two hypercube vertices differing in one coordinate."""
        return -0.5 * self.n * math.log1p(-self.c1 * self.c1 / self.n)


def assouad_frobenius_bound(spec: HypercubeSpec) -> float:
    """Assouad lower bound for the squared Frobenius risk.

    ``(1/4) (2 c1^2 c2^2 / n) ((2p - k)(k - 1) / 4) max(0, 1 - sqrt(K / 2))``
    where ``K`` is the exact one-flip KL and the last factor is the Pinsker
    bound on the testing affinity. ``k < 2`` leaves no off-diagonal band and
    gives 0.
    """
    k = spec.k
    if k < 2:
        return 0.0
    separation = 2.0 * spec.c1**2 * spec.c2**2 / spec.n
    count = (2 * spec.p - k) * (k - 1) / 4.0
    affinity = max(0.0, 1.0 - math.sqrt(spec.flip_kl / 2.0))
    return 0.25 * separation * count * affinity


def chi_affinity(sigma0, sigma1, sigma2) -> float:
    """``integral f1 f2 / f0`` for centred Gaussian densities ``f_i`` with covariances ``sigma_i``.

    Equals ``det(S0)^(1/2) det(S1)^(-1/2) det(S2)^(-1/2) det(S1^-1 + S2^-1 - S0^-1)^(-1/2)``,
    which reduces to ``det(I - S0^-2 (S1 - S0)(S2 - S0))^(-1/2)`` when ``S0`` is a
    multiple of the identity.

    Raises
    ------
    ConditionViolated
        If ``S1^-1 + S2^-1 - S0^-1`` is not positive definite (the integral diverges).
    """
    s0, s1, s2 = (matcore.as_spd(s) for s in (sigma0, sigma1, sigma2))
    matcore.check_same_shape(s0, s1)
    matcore.check_same_shape(s0, s2)
    m = matcore.symmetrize(matcore.matrix_inverse(s1) + matcore.matrix_inverse(s2) - matcore.matrix_inverse(s0))
    try:
        ld_m = matcore.log_det(m)
    except NotPositiveDefinite:
        raise ConditionViolated("S1^-1 + S2^-1 - S0^-1 is not positive definite; the affinity is infinite") from None
    log_value = 0.5 * (matcore.log_det(s0) - matcore.log_det(s1) - matcore.log_det(s2) - ld_m)
    return math.exp(log_value)


def logdet_remainder(b):
    """Remainder ``R = tr(B) - log det(I + B)`` and ``||B||_F^2``.

    ``I + tB`` must be positive definite for ``t`` in [0, 1]; it is checked at
    ``t = 1/2`` and ``t = 1`` (``t = 0`` is the identity).
    """
    b = matcore.as_symmetric(b)
    eye = np.eye(b.shape[0])
    matcore.cholesky(eye + 0.5 * b)
    ld = matcore.log_det(eye + b)
    return float(np.trace(b) - ld), float(np.sum(b * b))


# Wishart tails ------------------------------------------------------------


@dataclass(frozen=True)
class TailCheck:
    name: str
    threshold: float
    hits: int
    draws: int
    frequency: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool
    warning: Optional[str] = None


@dataclass(frozen=True)
class WishartTailReport:
    p: int
    nu: float
    draws: int
    checks: List[TailCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def wilson_interval(hits: int, trials: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be positive")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    phat = hits / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def wishart_tail_report(p: int, nu: float, draws: int, stream: SeedStream, chunk: int = 5000) -> WishartTailReport:
    """Empirical extreme-eigenvalue tails of ``W_p(nu, I / nu)`` against their exponential bounds.

    Checks ``P(lambda_max >= (2 + sqrt(p/nu))^2) <= 2 exp(-nu/2)`` and
    ``P(lambda_min <= (1 - sqrt(p/nu))^2 / 4) <= 2 exp(-nu (1 - sqrt(p/nu))^2 / 8)``.
    A check passes when the empirical frequency is within the bound; an upper
    Wilson limit above the bound only adds a warning.
    """
    if not nu >= p:
        raise InvalidDf(f"the eigenvalue tail bounds need nu >= p, got nu={nu}, p={p}")
    if draws < 1:
        raise ValueError("draws must be positive")
    params = WishartParams(nu, np.eye(p) / nu)
    r = math.sqrt(p / nu)
    t_max = (2.0 + r) ** 2
    t_min = (1.0 - r) ** 2 / 4.0
    hi = lo = 0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        w = matcore.eigvalsh(randmat.sample_wishart_batch(stream, params, m))
        hi += int(np.sum(w[:, -1] >= t_max))
        lo += int(np.sum(w[:, 0] <= t_min))
        done += m
    checks = []
    for name, thr, hits, bound in (
        ("lambda_max", t_max, hi, 2.0 * math.exp(-nu / 2.0)),
        ("lambda_min", t_min, lo, 2.0 * math.exp(-nu * (1.0 - r) ** 2 / 8.0)),
    ):
        freq = hits / draws
        ci = wilson_interval(hits, draws)
        warn = None
        if ci[1] > bound:
            warn = f"upper confidence limit {ci[1]:.3g} exceeds the bound {bound:.3g}; more draws would sharpen the check"
        checks.append(TailCheck(name, thr, hits, draws, freq, ci[0], ci[1], bound, freq <= bound, warn))
    return WishartTailReport(p, nu, draws, checks)
