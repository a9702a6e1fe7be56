"""Closed-form inverse-Wishart posterior updates and moments."""

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .. import matcore, randmat
from ..exceptions import (
    MomentUndefined,
    NotPositiveDefinite,
    OddK,
    SingularPosterior,
)
from ..randmat import IwParams, SeedStream, TruncIwParams
from ..specialfn import digamma, trigamma

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class NuRule:
    """Prior degrees of freedom as a function of (n, p).

    ``kind`` is one of ``const``, ``sqrt_n_over_p``, ``p``, ``n``,
    ``p_plus_one`` or ``zero``. :meth:`parse` accepts the config spellings
    ``"2"``, ``"sqrt(n/p)"``, ``"p"``, ``"n"``, ``"p+1"`` and ``"0"``.
    """

    kind: str
    value: float = 0.0

    _KINDS = ("const", "sqrt_n_over_p", "p", "n", "p_plus_one", "zero")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown nu rule {self.kind!r}")

    @classmethod
    def parse(cls, spec) -> "NuRule":
        if isinstance(spec, NuRule):
            return spec
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return cls("zero") if spec == 0 else cls("const", float(spec))
        text = re.sub(r"\s+", "", str(spec)).lower()
        named = {
            "p": "p",
            "n": "n",
            "p+1": "p_plus_one",
            "sqrt(n/p)": "sqrt_n_over_p",
            "zero": "zero",
            "0": "zero",
        }
        if text in named:
            return cls(named[text])
        if text in cls._KINDS:
            return cls(text)
        try:
            return cls("const", float(text))
        except ValueError:
            raise ValueError(f"cannot parse nu rule {spec!r}") from None

    def resolve(self, n: int, p: int) -> float:
        return {
            "const": self.value,
            "sqrt_n_over_p": math.sqrt(n / p),
            "p": float(p),
            "n": float(n),
            "p_plus_one": float(p + 1),
            "zero": 0.0,
        }[self.kind]

    @property
    def label(self) -> str:
        if self.kind == "const":
            return f"{self.value:g}"
        return {"sqrt_n_over_p": "sqrt(n/p)", "p_plus_one": "p+1", "zero": "0"}.get(self.kind, self.kind)


def prior_scale_matrix(spec, p: int) -> np.ndarray:
    """Prior scale from ``None``/``"zero"``, ``"identity"``, a number (times I) or a matrix."""
    if spec is None or (isinstance(spec, str) and spec.lower() in ("zero", "o", "0")):
        return np.zeros((p, p))
    if isinstance(spec, str):
        if spec.lower() in ("identity", "i"):
            return np.eye(p)
        raise ValueError(f"unknown prior scale {spec!r}")
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(p)
    return matcore.as_symmetric(arr)


@dataclass(frozen=True)
class PosteriorIw:
    """``IW_p(n + nu, n S + A)`` posterior."""

    params: IwParams
    n: int

    @property
    def p(self) -> int:
        return self.params.dim

    @property
    def df(self) -> float:
        return self.params.df

    @property
    def scale(self) -> np.ndarray:
        return self.params.scale

    def sample(self, stream: SeedStream, size: int) -> np.ndarray:
        return randmat.sample_inverse_wishart_batch(stream, self.params, size)


@dataclass(frozen=True)
class PointMass:
    """Degenerate posterior concentrated on one matrix."""

    matrix: np.ndarray

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def sample(self, stream: SeedStream, size: int) -> np.ndarray:
        return np.broadcast_to(self.matrix, (size,) + self.matrix.shape).copy()


@dataclass(frozen=True)
class PosteriorMixture:
    """Posterior of the IW / point-mass-at-identity mixture prior."""

    branch: Union[PosteriorIw, PointMass]
    gamma: float

    @property
    def is_point_mass(self) -> bool:
        return isinstance(self.branch, PointMass)

    def sample(self, stream: SeedStream, size: int) -> np.ndarray:
        return self.branch.sample(stream, size)


@dataclass(frozen=True)
class TruncatedPosterior:
    """Truncated inverse-Wishart posterior (eigenvalues confined to ``[k1, k2]``)."""

    params: TruncIwParams
    n: int
    max_attempts: int = 1_000_000

    @property
    def p(self) -> int:
        return self.params.base.dim

    def sample(self, stream: SeedStream, size: int) -> np.ndarray:
        draws, _ = randmat.sample_truncated_iw_batch(stream, self.params, size, max_attempts=self.max_attempts)
        return draws


def iw_posterior(prior: IwParams, n: int, s) -> PosteriorIw:
    """Conjugate update ``(nu, A) -> (nu + n, A + n S)``.

    Raises
    ------
    SingularPosterior
        If ``A + n S`` is not positive definite (e.g. an improper prior with n < p).
    """
    s = matcore.as_symmetric(s)
    matcore.check_same_shape(s, prior.scale)
    scale = matcore.symmetrize(prior.scale + n * s)
    try:
        matcore.cholesky(scale)
    except NotPositiveDefinite:
        raise SingularPosterior(
            f"posterior scale n S + A is not positive definite (n={n}, p={s.shape[0]})"
        ) from None
    return PosteriorIw(IwParams(prior.df + n, scale), n)


def posterior_mean(post: PosteriorIw) -> np.ndarray:
    """``(n S + A) / (n + nu - p - 1)``."""
    denom = post.df - post.p - 1
    if not denom > 0:
        raise MomentUndefined(f"posterior mean needs n + nu - p - 1 > 0, got {denom:g}")
    return post.scale / denom


def posterior_element_moments(post: PosteriorIw):
    """Entrywise posterior mean and variance of ``Sigma``.

    With ``m = n + nu - p`` and ``b = n S + A``::

        Var(sigma_ij) = ((m + 1) b_ij^2 + (m - 1) b_ii b_jj) / (m (m - 1)^2 (m - 3))
    """
    m = post.df - post.p
    if not m > 3:
        raise MomentUndefined(f"posterior variances need n + nu - p > 3, got {m:g}")
    b = post.scale
    d = np.diag(b)
    var = ((m + 1.0) * b * b + (m - 1.0) * np.outer(d, d)) / (m * (m - 1.0) ** 2 * (m - 3.0))
    return b / (m - 1.0), var


def mixture_posterior(prior: IwParams, gamma: float, n: int, p: int, s) -> PosteriorMixture:
    """Point mass at the identity when ``p > gamma * n``, otherwise the IW posterior."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if p > gamma * n:
        return PosteriorMixture(PointMass(np.eye(p)), gamma)
    return PosteriorMixture(iw_posterior(prior, n, s), gamma)


def default_taper_k(n: int) -> int:
    """Even bandwidth nearest to sqrt(n): ``2 * round(sqrt(n) / 2)``, at least 2 (halves round up)."""
    return max(2, 2 * int(math.floor(math.sqrt(n) / 2.0 + 0.5)))


def tapering_weights(p: int, k: int) -> np.ndarray:
    """Weight matrix ``w(|i - j|)``: 1 up to k/2, linear down to 0 at k."""
    if k < 2 or k % 2:
        raise OddK(f"tapering bandwidth must be an even integer >= 2, got {k}")
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p))).astype(float)
    w = np.clip(2.0 - 2.0 * d / k, 0.0, 1.0)
    return w


def tapering_estimator(s, k: int) -> np.ndarray:
    s = matcore.as_symmetric(s)
    return s * tapering_weights(s.shape[0], k)


def logdet_posterior_moments(post: PosteriorIw):
    """Posterior mean and variance of ``log det Sigma``.

    ``log det Sigma = log det(n S + A) - sum_k log chi2_{n + nu - k}`` under
    the posterior, so the moments follow from digamma and trigamma.
    """
    half = (post.df - np.arange(post.p)) / 2.0
    if np.any(half <= 0.0):
        raise SingularPosterior(f"posterior df {post.df:g} too small for p={post.p}")
    try:
        ld = matcore.log_det(post.scale)
    except NotPositiveDefinite:
        raise SingularPosterior("posterior scale is not positive definite") from None
    mean = ld - float(np.sum(digamma(half))) - post.p * LOG2
    var = float(np.sum(trigamma(half)))
    return mean, var


def logdet_point_estimate(kind: str, s, n: int, prior: IwParams = None) -> float:
    """Point estimate of ``log det Sigma``.

    ``kind`` is ``"mle"`` (log det S), ``"umvue"``
    (``log det S + p log(n/2) - sum_j digamma((n - j)/2)``) or ``"bayes"``
    (posterior mean under the inverse-Wishart ``prior``).
    """
    s = matcore.as_symmetric(s)
    p = s.shape[0]
    if kind == "mle":
        return matcore.log_det(s)
    if kind == "umvue":
        if n < p:
            raise NotPositiveDefinite(f"UMVUE needs n >= p (n={n}, p={p})")
        half = (n - np.arange(p)) / 2.0
        return matcore.log_det(s) + p * math.log(n / 2.0) - float(np.sum(digamma(half)))
    if kind == "bayes":
        if prior is None:
            raise ValueError("bayes log-det estimate needs a prior")
        return logdet_posterior_moments(iw_posterior(prior, n, s))[0]
    raise ValueError(f"unknown log-det estimator {kind!r}")


def truncated_posterior_mean_mc(params: TruncIwParams, draws: int, stream: SeedStream, max_attempts: int = 1_000_000):
    """Monte Carlo mean of a truncated inverse-Wishart law.

    Returns ``(mean, se)``; ``se`` is the entrywise sample SD over ``sqrt(draws)``
    and is all-NaN when ``draws == 1``.
    """
    if draws < 1:
        raise ValueError("draws must be positive")
    sample, _ = randmat.sample_truncated_iw_batch(stream, params, draws, max_attempts=max_attempts)
    mean = matcore.symmetrize(sample.mean(axis=0))
    if draws == 1:
        se = np.full_like(mean, np.nan)
    else:
        se = sample.std(axis=0, ddof=1) / math.sqrt(draws)
    return mean, se
