"""Posterior loss, posterior risk and frequentist risk of covariance estimators.

A :class:`Scenario` fixes the dimension, sample size, truth, prior, estimator
and loss. Replicate ``r`` draws its data from ``derive_stream(base_seed, tag,
r)``; the default ``tag`` depends only on ``(p, n, truth)``, so every
estimator and loss evaluated on the same cell sees the same truth and data
sets (common random numbers). The truth itself comes from a stream keyed on
``(p, truth)`` only: one truth per dimension, reused across replicates and
sample sizes.
"""

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from . import matcore, randmat
from .estimators.posterior import (
    NuRule,
    PointMass,
    PosteriorIw,
    PosteriorMixture,
    TruncatedPosterior,
    default_taper_k,
    iw_posterior,
    logdet_point_estimate,
    logdet_posterior_moments,
    mixture_posterior,
    posterior_element_moments,
    posterior_mean,
    prior_scale_matrix,
    tapering_estimator,
    tapering_weights,
    truncated_posterior_mean_mc,
)
from .exceptions import (
    DegenerateFit,
    InvalidDf,
    MomentUndefined,
    NotPositiveDefinite,
    ReplicateFailed,
    SingularPosterior,
    UnsupportedLoss,
    UnsupportedPrior,
)
from .losses import LossSpec, loss_batch
from .randmat import DiagonalTruth, FixedTruth, FullTruth, IwParams, SeedStream, TruncIwParams
from .specialfn import digamma, trigamma

PRIOR_KINDS = ("iw", "mixture", "truncated_iw")
POINT_ESTIMATORS = ("posterior_mean", "sample_cov", "tapering", "logdet_mle", "logdet_umvue", "logdet_bayes")
ESTIMATORS = ("posterior",) + POINT_ESTIMATORS

# salt separating the truth stream from the replicate streams
_TRUTH_INDEX = 0xFFFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class PriorSpec:
    """Prior family with its hyperparameters.

    ``scale`` is anything :func:`prior_scale_matrix` accepts (``"zero"``,
    ``"identity"``, a number, a matrix). ``gamma`` is used by the mixture
    prior, ``k1``/``k2`` by the truncated prior.
    """

    kind: str = "iw"
    nu: Any = "p"
    scale: Any = "zero"
    gamma: float = 0.5
    k1: float = 1e-3
    k2: float = 1e3
    max_attempts: int = 1_000_000

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise UnsupportedPrior(f"unknown prior kind {self.kind!r}")
        object.__setattr__(self, "nu", NuRule.parse(self.nu))
        if self.kind == "mixture" and not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.kind == "truncated_iw" and not 0.0 < self.k1 < self.k2:
            raise ValueError(f"need 0 < k1 < k2, got [{self.k1}, {self.k2}]")

    def params(self, n: int, p: int) -> IwParams:
        return IwParams(self.nu.resolve(n, p), prior_scale_matrix(self.scale, p))

    @property
    def scale_label(self) -> str:
        return self.scale if isinstance(self.scale, str) else ("matrix" if np.ndim(self.scale) else f"{self.scale:g}I")


@dataclass(frozen=True)
class Scenario:
    """One simulation cell.

    ``estimator`` is ``"posterior"`` for the posterior risk (P-risk) or one of
    the point estimators in ``POINT_ESTIMATORS`` for the frequentist risk.
    """

    p: int
    n: int
    truth: Any = field(default_factory=DiagonalTruth)
    prior: PriorSpec = field(default_factory=PriorSpec)
    estimator: str = "posterior"
    loss: LossSpec = field(default_factory=LossSpec)
    replicates: int = 100
    posterior_draws: int = 200
    base_seed: int = 0
    tag: Optional[int] = None
    per_replicate_truth: bool = False
    taper_k: Optional[int] = None

    @property
    def data_tag(self) -> int:
        if self.tag is not None:
            return int(self.tag)
        return _stable_hash("data", self.p, self.n, truth_key(self.truth))

    @property
    def truth_tag(self) -> int:
        return _stable_hash("truth", self.p, truth_key(self.truth))


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    se: float
    replicates: int
    inner_draws: int
    inner_method: str


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: List[Tuple[float, float]]


def _stable_hash(*parts) -> int:
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def truth_key(truth) -> str:
    if isinstance(truth, DiagonalTruth):
        return f"diagonal:{truth.low!r}:{truth.high!r}"
    if isinstance(truth, FullTruth):
        return f"full:{truth.scale!r}"
    if isinstance(truth, FixedTruth):
        return "fixed:" + hashlib.blake2b(truth.matrix.tobytes(), digest_size=8).hexdigest()
    raise TypeError(f"unknown truth spec {truth!r}")


def _needs_spd(loss: LossSpec) -> bool:
    if loss.family == "bregman":
        return loss.phi.kind != "squared_euclid"
    return loss.family in ("logdet", "spectral_precision")


# Posterior loss -----------------------------------------------------------


def ploss_closed_form(post: PosteriorIw, sigma0, loss: LossSpec) -> float:
    """Posterior expected loss from posterior moments.

    Squared Frobenius: ``scale * (sum_ij Var(sigma_ij | X) + ||E(Sigma | X) - Sigma0||_F^2)``.
    Squared log-det: ``(E log det Sigma - log det Sigma0)^2 + Var(log det Sigma)``.
    """
    sigma0 = matcore.as_symmetric(sigma0)
    if loss.family == "frobenius" and loss.power == 2:
        mean, var = posterior_element_moments(post)
        d = mean - sigma0
        return float(loss.scale * (np.sum(var) + np.sum(d * d)))
    if loss.family == "logdet":
        m, v = logdet_posterior_moments(post)
        return float(loss.scale * ((m - matcore.log_det(sigma0)) ** 2 + v))
    raise UnsupportedLoss(f"no closed-form posterior loss for {loss.label} (power {loss.power})")


def ploss_mc(posterior, sigma0, loss: LossSpec, draws: int, stream: SeedStream):
    """Monte Carlo posterior expected loss; returns ``(estimate, se)``.

    A point-mass posterior (or a mixture on its point-mass branch) gives the
    exact loss with ``se = 0``.
    """
    sigma0 = matcore.as_symmetric(sigma0)
    branch = posterior.branch if isinstance(posterior, PosteriorMixture) else posterior
    if isinstance(branch, PointMass):
        return float(loss(branch.matrix, sigma0)), 0.0
    if draws < 2:
        raise ValueError("ploss_mc needs at least 2 draws")
    values = loss_batch(loss, branch.sample(stream, draws), sigma0)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(draws))


def _closed_form_available(df: float, p: int, loss: LossSpec) -> bool:
    if loss.family == "frobenius" and loss.power == 2:
        return df - p > 3
    return loss.family == "logdet"


# Exact risk oracles -------------------------------------------------------


def exact_prisk(loss: LossSpec, sigma0, n: int, prior: IwParams) -> float:
    """Exact posterior risk ``E_{Sigma0} E(d(Sigma, Sigma0) | X)`` for the IW prior.

    Squared Frobenius uses the Wishart moments of ``b = n S + A``::

        E b_ij = n s_ij + a_ij,  Var b_ij = n (s_ij^2 + s_ii s_jj),  Cov(b_ii, b_jj) = 2 n s_ij^2

    Squared log-det needs ``A = 0`` and does not depend on ``Sigma0``::

        sum_k psi'((n-k)/2) + (sum_k [psi((n-k)/2) - psi((n+nu-k)/2)])^2 + sum_k psi'((n+nu-k)/2)
    """
    sigma0 = matcore.as_spd(sigma0)
    p = sigma0.shape[0]
    matcore.check_same_shape(sigma0, prior.scale)
    nu = prior.df
    if loss.family == "frobenius" and loss.power == 2:
        m = n + nu - p
        if not m > 3:
            raise MomentUndefined(f"exact Frobenius risk needs n + nu - p > 3, got {m:g}")
        a = prior.scale
        eb = n * sigma0 + a
        d = np.diag(sigma0)
        var_b = n * (sigma0 * sigma0 + np.outer(d, d))
        eb2 = var_b + eb * eb
        ebd = np.diag(eb)
        e_bii_bjj = 2.0 * n * sigma0 * sigma0 + np.outer(ebd, ebd)
        t1 = np.sum((m + 1.0) * eb2 + (m - 1.0) * e_bii_bjj) / (m * (m - 1.0) ** 2 * (m - 3.0))
        t2 = np.sum(var_b / (m - 1.0) ** 2 + (eb / (m - 1.0) - sigma0) ** 2)
        return float(loss.scale * (t1 + t2))
    if loss.family == "logdet":
        if np.any(prior.scale != 0.0):
            raise UnsupportedPrior("exact log-det risk is available only for A = 0")
        if not n > p - 1:
            raise MomentUndefined(f"exact log-det risk needs n > p - 1 (n={n}, p={p})")
        k = np.arange(p)
        h0 = (n - k) / 2.0
        h1 = (n + nu - k) / 2.0
        bias = float(np.sum(digamma(h0) - digamma(h1)))
        value = float(np.sum(trigamma(h0))) + bias * bias + float(np.sum(trigamma(h1)))
        return float(loss.scale * value)
    raise UnsupportedLoss(f"no exact risk for {loss.label}")


# Scenario validation ------------------------------------------------------


def validate_scenario(sc: Scenario) -> str:
    """Check every existence condition up front; returns the inner method.

    The inner method is ``"closed_form"``, ``"mc"`` or ``"exact"`` for the
    posterior risk and ``"point"`` or ``"point_mc"`` for point estimators.
    """
    if sc.p < 1 or sc.n < 1:
        raise ValueError(f"p and n must be positive, got p={sc.p}, n={sc.n}")
    if sc.replicates < 2:
        raise ValueError("replicates must be at least 2 for a standard error")
    if sc.estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {sc.estimator!r}; choose from {ESTIMATORS}")
    if isinstance(sc.truth, FixedTruth) and sc.truth.matrix.shape[0] != sc.p:
        raise ValueError(f"fixed truth has dimension {sc.truth.matrix.shape[0]}, scenario p={sc.p}")
    if isinstance(sc.truth, FixedTruth):
        matcore.as_spd(sc.truth.matrix)
    p, n, loss, prior = sc.p, sc.n, sc.loss, sc.prior
    params = prior.params(n, p)
    df = params.df + n
    scale_spd = _is_spd(params.scale)
    point_mass = prior.kind == "mixture" and p > prior.gamma * n

    def check_posterior():
        if not scale_spd and n < p:
            raise SingularPosterior(f"n S + A is singular: A is not positive definite and n={n} < p={p}")
        if not df > p - 1:
            raise InvalidDf(f"posterior df n + nu = {df:g} must exceed p - 1 = {p - 1}")

    est = sc.estimator
    if est == "posterior":
        if point_mass:
            return "exact"
        check_posterior()
        if sc.posterior_draws < 2:
            raise ValueError("posterior_draws must be at least 2")
        if prior.kind == "iw" or prior.kind == "mixture":
            return "closed_form" if _closed_form_available(df, p, loss) else "mc"
        return "mc"

    if est in ("logdet_mle", "logdet_umvue", "logdet_bayes") and loss.family != "logdet":
        raise UnsupportedLoss(f"estimator {est} needs the logdet loss, got {loss.label}")
    if est == "tapering" and _needs_spd(loss):
        raise UnsupportedLoss(f"the tapered estimate need not be positive definite; {loss.label} is unsupported")
    if est == "tapering" and sc.taper_k is not None:
        tapering_weights(1, sc.taper_k)
    if est in ("sample_cov", "logdet_mle", "logdet_umvue") and (n < p) and (_needs_spd(loss)):
        raise NotPositiveDefinite(f"{est} with loss {loss.label} needs n >= p (n={n}, p={p})")
    if est == "logdet_bayes" or (est == "posterior_mean" and loss.family == "logdet"):
        if point_mass:
            return "point"
        check_posterior()
        return "point"
    if est == "posterior_mean":
        if point_mass:
            return "point"
        check_posterior()
        if prior.kind == "truncated_iw":
            if sc.posterior_draws < 1:
                raise ValueError("posterior_draws must be positive")
            return "point_mc"
        if not df - p - 1 > 0:
            raise MomentUndefined(f"posterior mean needs n + nu - p - 1 > 0, got {df - p - 1:g}")
    return "point"


def _is_spd(a) -> bool:
    try:
        matcore.cholesky(a)
        return True
    except NotPositiveDefinite:
        return False


# Replicate machinery ------------------------------------------------------


def scenario_truth(sc: Scenario) -> np.ndarray:
    """The truth shared by all replicates of ``sc``."""
    return randmat.gen_truth(randmat.derive_stream(sc.base_seed, sc.truth_tag, _TRUTH_INDEX), sc.truth, sc.p)


def _posterior(sc: Scenario, s: np.ndarray):
    params = sc.prior.params(sc.n, sc.p)
    if sc.prior.kind == "mixture":
        return mixture_posterior(params, sc.prior.gamma, sc.n, sc.p, s)
    post = iw_posterior(params, sc.n, s)
    if sc.prior.kind == "truncated_iw":
        return TruncatedPosterior(TruncIwParams(post.params, sc.prior.k1, sc.prior.k2), sc.n, sc.prior.max_attempts)
    return post


def _point_estimate(sc: Scenario, s: np.ndarray, stream: SeedStream):
    """Covariance estimate, or a float when the estimator targets ``log det``."""
    est = sc.estimator
    if est == "sample_cov":
        return s
    if est == "tapering":
        k = default_taper_k(sc.n) if sc.taper_k is None else sc.taper_k
        return tapering_estimator(s, k)
    if est == "logdet_mle":
        return logdet_point_estimate("mle", s, sc.n)
    if est == "logdet_umvue":
        return logdet_point_estimate("umvue", s, sc.n)
    post = _posterior(sc, s)
    if isinstance(post, PosteriorMixture):
        if post.is_point_mass:
            m = post.branch.matrix
            return matcore.log_det(m) if est == "logdet_bayes" or sc.loss.family == "logdet" else m
        post = post.branch
    if est == "logdet_bayes" or sc.loss.family == "logdet":
        if isinstance(post, TruncatedPosterior):
            raise UnsupportedPrior("log-det point estimates are not available for the truncated prior")
        return logdet_posterior_moments(post)[0]
    if isinstance(post, TruncatedPosterior):
        return truncated_posterior_mean_mc(post.params, sc.posterior_draws, stream, sc.prior.max_attempts)[0]
    return posterior_mean(post)


def _replicate(sc: Scenario, method: str, truth: np.ndarray, r: int) -> float:
    stream = randmat.derive_stream(sc.base_seed, sc.data_tag, r)
    if sc.per_replicate_truth:
        truth = randmat.gen_truth(stream, sc.truth, sc.p)
    s = randmat.sample_covariance(randmat.sample_mvn(stream, truth, sc.n))
    if sc.estimator != "posterior":
        est = _point_estimate(sc, s, stream)
        if isinstance(est, float):
            return sc.loss.scale * (est - matcore.log_det(truth)) ** 2
        return sc.loss(est, truth)
    post = _posterior(sc, s)
    if method == "closed_form":
        branch = post.branch if isinstance(post, PosteriorMixture) else post
        return ploss_closed_form(branch, truth, sc.loss)
    return ploss_mc(post, truth, sc.loss, sc.posterior_draws, stream)[0]


def replicate_losses(sc: Scenario, threads: int = 1) -> Tuple[np.ndarray, str]:
    """Per-replicate losses in replicate order, and the inner method used."""
    method = validate_scenario(sc)
    truth = None if sc.per_replicate_truth else scenario_truth(sc)

    def task(r):
        try:
            return _replicate(sc, method, truth, r)
        except Exception as exc:  # re-raised below with the replicate index
            return ReplicateFailed(r, exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(sc.replicates)))
    else:
        results = [task(r) for r in range(sc.replicates)]
    for res in results:
        if isinstance(res, ReplicateFailed):
            raise res
    return np.array(results, dtype=float), method


def _summarize(values: np.ndarray, sc: Scenario, method: str) -> RiskEstimate:
    k = values.size
    mean = math.fsum(values) / k
    var = math.fsum((v - mean) ** 2 for v in values) / (k - 1)
    inner = sc.posterior_draws if method in ("mc", "point_mc") else 0
    return RiskEstimate(mean, math.sqrt(var / k), k, inner, method)


def prisk_mc(scenario: Scenario, threads: int = 1) -> RiskEstimate:
    """Posterior risk over data replicates; the posterior loss is closed-form when available."""
    if scenario.estimator != "posterior":
        raise ValueError("prisk_mc needs estimator='posterior'; use frequentist_risk_mc for point estimators")
    values, method = replicate_losses(scenario, threads)
    return _summarize(values, scenario, method)


def frequentist_risk_mc(scenario: Scenario, threads: int = 1) -> RiskEstimate:
    """Mean loss of a point estimator over data replicates."""
    if scenario.estimator == "posterior":
        raise ValueError("frequentist_risk_mc needs a point estimator")
    values, method = replicate_losses(scenario, threads)
    return _summarize(values, scenario, method)


def run_scenario(scenario: Scenario, threads: int = 1) -> RiskEstimate:
    """Posterior or frequentist risk depending on ``scenario.estimator``."""
    values, method = replicate_losses(scenario, threads)
    return _summarize(values, scenario, method)


def rate_fit(points: Sequence[Tuple[float, float]]) -> RateFit:
    """Least squares of ``log risk`` on ``log n``; the slope is the empirical rate exponent."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise DegenerateFit(f"rate fit needs at least 3 points, got {len(pts)}")
    x = np.array([a for a, _ in pts])
    y = np.array([b for _, b in pts])
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DegenerateFit("rate fit needs positive, finite n and risk values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DegenerateFit("rate fit needs at least two distinct n values")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if sst == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / sst)
    return RateFit(float(slope), float(intercept), min(1.0, r2), pts)
