"""Reproducible random sampling for covariance experiments.

Every sampler draws from a :class:`SeedStream`, a SplitMix64 counter stream.
Because SplitMix64 output ``k`` is ``mix(state + k * gamma)``, blocks of
uniforms are produced with vectorized ``uint64`` arithmetic, and the stream
position after a call depends only on how many numbers were consumed. Normal
variates use the polar Box-Muller method and gamma variates the
Marsaglia-Tsang squeeze, both vectorized with deterministic rejection rounds.

Wishart convention: ``W_p(df, scale)`` has mean ``df * scale``.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import matcore
from .exceptions import (
    DimensionMismatch,
    ImproperPrior,
    InvalidDf,
    MomentUndefined,
    NotPositiveDefinite,
    SingularTruth,
    TruncationExhausted,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@dataclass
class SeedStream:
    """SplitMix64 stream; ``origin`` records the (base, tag, index) it came from."""

    state: int
    origin: Tuple[int, int, int] = field(default=(0, 0, 0))

    def next_uint64(self, size: int) -> np.ndarray:
        ks = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            raw = np.uint64(self.state) + ks * np.uint64(_GOLDEN)
        self.state = (self.state + size * _GOLDEN) & _MASK64
        return _mix64(raw)

    def uniform(self, size: int) -> np.ndarray:
        """Doubles on the open interval (0, 1), 53 random bits each."""
        bits = self.next_uint64(size) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def standard_normal(self, size: int) -> np.ndarray:
        """Standard normal variates by the polar Box-Muller method."""
        out = np.empty(size)
        filled = 0
        while filled < size:
            need_pairs = (size - filled + 1) // 2
            batch = int(need_pairs * 1.3) + 8
            uv = 2.0 * self.uniform(2 * batch) - 1.0
            u, v = uv[0::2], uv[1::2]
            s = u * u + v * v
            ok = (s > 0.0) & (s < 1.0)
            u, v, s = u[ok], v[ok], s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            z = np.empty(2 * u.size)
            z[0::2] = u * f
            z[1::2] = v * f
            take = min(z.size, size - filled)
            out[filled : filled + take] = z[:take]
            filled += take
        return out

    def standard_gamma(self, shape) -> np.ndarray:
        """Gamma(shape, 1) variates, one per entry of ``shape`` (Marsaglia-Tsang)."""
        shape = np.asarray(shape, dtype=float)
        flat = shape.ravel()
        if np.any(flat <= 0.0):
            raise ValueError("gamma shape must be positive")
        boosted = flat < 1.0
        a = np.where(boosted, flat + 1.0, flat)
        d = a - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(flat.size)
        pending = np.arange(flat.size)
        while pending.size:
            x = self.standard_normal(pending.size)
            u = self.uniform(pending.size)
            dp, cp = d[pending], c[pending]
            v = (1.0 + cp * x) ** 3
            with np.errstate(invalid="ignore", divide="ignore"):
                logv = np.log(np.where(v > 0.0, v, 1.0))
                accept = (v > 0.0) & (
                    (u < 1.0 - 0.0331 * x**4)
                    | (np.log(u) < 0.5 * x * x + dp * (1.0 - v + logv))
                )
            out[pending[accept]] = (dp * v)[accept]
            pending = pending[~accept]
        if np.any(boosted):
            idx = np.flatnonzero(boosted)
            u = self.uniform(idx.size)
            out[idx] *= u ** (1.0 / flat[idx])
        return out.reshape(shape.shape)

    def chisquare(self, df) -> np.ndarray:
        return 2.0 * self.standard_gamma(np.asarray(df, dtype=float) / 2.0)


def derive_stream(base_seed: int, scenario_tag: int, replicate_index: int) -> SeedStream:
    """Deterministic stream for one (base, tag, replicate) triple.

    The start state is ``mix(mix(base ^ tag) + index * gamma)``; since ``mix``
    is a bijection on 64-bit words and ``gamma`` is odd, distinct indices give
    distinct states.
    """
    base, tag, idx = (int(v) & _MASK64 for v in (base_seed, scenario_tag, replicate_index))
    root = _mix64_int(base ^ tag)
    state = _mix64_int((root + idx * _GOLDEN) & _MASK64)
    return SeedStream(state=state, origin=(base, tag, idx))


def derive_states(base_seed: int, scenario_tag: int, indices) -> np.ndarray:
    """Vectorized start states of :func:`derive_stream` for many indices."""
    root = _mix64_int((int(base_seed) ^ int(scenario_tag)) & _MASK64)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(root) + idx * np.uint64(_GOLDEN))


@dataclass(frozen=True)
class WishartParams:
    """Parameters of ``W_p(df, scale)`` (mean ``df * scale``)."""

    df: float
    scale: np.ndarray

    def __post_init__(self):
        scale = matcore.as_spd(self.scale)
        object.__setattr__(self, "scale", scale)
        p = scale.shape[0]
        if not self.df > p - 1:
            raise InvalidDf(f"Wishart df must exceed p - 1 = {p - 1}, got {self.df}")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True)
class IwParams:
    """Inverse-Wishart ``IW_p(df, scale)``; improper members are allowed.

    ``scale`` only needs to be symmetric positive semi-definite; sampling
    requires :meth:`proper`.
    """

    df: float
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", matcore.as_symmetric(self.scale))

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    def proper(self) -> bool:
        if not self.df > self.dim - 1:
            return False
        try:
            matcore.cholesky(self.scale)
        except NotPositiveDefinite:
            return False
        return True

    def mean(self) -> np.ndarray:
        denom = self.df - self.dim - 1
        if not denom > 0:
            raise MomentUndefined(f"IW mean needs df > p + 1, got df={self.df}, p={self.dim}")
        return self.scale / denom


@dataclass(frozen=True)
class TruncIwParams:
    """Inverse-Wishart restricted to matrices with every eigenvalue in ``[k1, k2]``."""

    base: IwParams
    k1: float
    k2: float

    def __post_init__(self):
        if not 0.0 < self.k1 < self.k2:
            raise ValueError(f"need 0 < k1 < k2, got k1={self.k1}, k2={self.k2}")


def _bartlett(stream: SeedStream, df: float, p: int, size: int) -> np.ndarray:
    """Lower-triangular Bartlett factors ``(size, p, p)`` for ``W_p(df, I)``."""
    rows, cols = np.tril_indices(p, -1)
    t = np.zeros((size, p, p))
    if rows.size:
        t[:, rows, cols] = stream.standard_normal(size * rows.size).reshape(size, rows.size)
    dfs = np.broadcast_to(df - np.arange(p, dtype=float), (size, p))
    diag = np.sqrt(stream.chisquare(dfs))
    idx = np.arange(p)
    t[:, idx, idx] = diag
    return t


def sample_wishart_batch(stream: SeedStream, params: WishartParams, size: int) -> np.ndarray:
    """``size`` Wishart draws, shape ``(size, p, p)``."""
    low = matcore.cholesky(params.scale)
    t = _bartlett(stream, params.df, params.dim, size)
    lt = low @ t
    return matcore.symmetrize(lt @ np.swapaxes(lt, -1, -2))


def sample_wishart(stream: SeedStream, params: WishartParams) -> np.ndarray:
    """One draw from ``W_p(df, scale)`` by the Bartlett decomposition."""
    return sample_wishart_batch(stream, params, 1)[0]


def _iw_factor(params: IwParams) -> np.ndarray:
    if not params.proper():
        raise ImproperPrior(
            f"inverse-Wishart with df={params.df}, p={params.dim} and the given scale is not proper"
        )
    return matcore.cholesky(params.scale)


def sample_inverse_wishart_batch(stream: SeedStream, params: IwParams, size: int) -> np.ndarray:
    """``size`` draws from ``IW_p(df, scale)``, shape ``(size, p, p)``.

    With ``scale = C C^T`` and Bartlett factor ``T`` of ``W_p(df, I)``, the
    draw is ``M M^T`` where ``M = C T^{-T}``; only a triangular inverse is
    formed.
    """
    c = _iw_factor(params)
    t = _bartlett(stream, params.df, params.dim, size)
    m = c @ np.swapaxes(matcore.inv_lower_triangular(t), -1, -2)
    return matcore.symmetrize(m @ np.swapaxes(m, -1, -2))


def sample_inverse_wishart(stream: SeedStream, params: IwParams) -> np.ndarray:
    return sample_inverse_wishart_batch(stream, params, 1)[0]


def sample_truncated_iw_batch(
    stream: SeedStream,
    params: TruncIwParams,
    size: int,
    max_attempts: int = 1_000_000,
    chunk: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """Rejection-sample ``size`` truncated draws; returns (draws, attempts used)."""
    chunk = chunk or max(16, 2 * size)
    kept = []
    n_kept = 0
    attempts = 0
    while n_kept < size:
        if attempts >= max_attempts:
            rate = n_kept / attempts if attempts else 0.0
            raise TruncationExhausted(
                f"accepted {n_kept} of {size} truncated draws in {attempts} attempts "
                f"(acceptance rate {rate:.3g}); widen [k1, k2]",
                acceptance_rate=rate,
                attempts=attempts,
            )
        m = min(chunk, max_attempts - attempts)
        draws = sample_inverse_wishart_batch(stream, params.base, m)
        w = matcore.eigvalsh(draws)
        ok = (w[:, 0] >= params.k1) & (w[:, -1] <= params.k2)
        hits = np.flatnonzero(ok)
        need = size - n_kept
        if hits.size >= need:
            hits = hits[:need]
            attempts += int(hits[-1]) + 1
        else:
            attempts += m
        kept.append(draws[hits])
        n_kept += hits.size
    return np.concatenate(kept, axis=0), attempts


def sample_truncated_iw(stream: SeedStream, params: TruncIwParams, max_attempts: int = 1_000_000) -> np.ndarray:
    """One truncated inverse-Wishart draw by rejection from the untruncated law.

    Raises
    ------
    TruncationExhausted
        After ``max_attempts`` rejections; carries the observed acceptance rate.
    """
    draws, _ = sample_truncated_iw_batch(stream, params, 1, max_attempts=max_attempts, chunk=64)
    return draws[0]


def sample_mvn(stream: SeedStream, sigma, n: int) -> np.ndarray:
    """``n`` rows i.i.d. ``N_p(0, sigma)`` as ``Z L^T`` with ``L = cholesky(sigma)``."""
    sigma = matcore.as_symmetric(sigma)
    low = matcore.cholesky(sigma)
    if n < 1:
        raise ValueError("n must be at least 1")
    p = sigma.shape[0]
    z = stream.standard_normal(n * p).reshape(n, p)
    return z @ low.T


def sample_covariance(data) -> np.ndarray:
    """Mean-zero sample covariance ``X^T X / n``."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionMismatch(f"data must be an (n, p) array with n >= 1, got shape {x.shape}")
    return matcore.symmetrize(x.T @ x / x.shape[0])


# Truth generators ---------------------------------------------------------


@dataclass(frozen=True)
class DiagonalTruth:
    """``diag(sigma_ii)`` with ``sigma_ii ~ Unif(low, high)``."""

    low: float = 0.0
    high: float = 5.0
    kind = "diagonal"


@dataclass(frozen=True)
class FullTruth:
    """``V^T V`` with ``v_ij ~ N(0, scale / p)``."""

    scale: float = 5.0
    kind = "full"


@dataclass(frozen=True)
class FixedTruth:
    matrix: np.ndarray
    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "matrix", matcore.as_symmetric(self.matrix))

    def __eq__(self, other):
        return isinstance(other, FixedTruth) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


def _draw_truth(stream: SeedStream, spec, p: int) -> np.ndarray:
    if isinstance(spec, DiagonalTruth):
        u = stream.uniform(p)
        return np.diag(spec.low + (spec.high - spec.low) * u)
    if isinstance(spec, FullTruth):
        v = stream.standard_normal(p * p).reshape(p, p) * np.sqrt(spec.scale / p)
        return matcore.symmetrize(v.T @ v)
    if isinstance(spec, FixedTruth):
        if spec.matrix.shape[0] != p:
            raise DimensionMismatch(f"fixed truth is {spec.matrix.shape[0]}x{spec.matrix.shape[0]}, expected p={p}")
        return spec.matrix.copy()
    raise TypeError(f"unknown truth spec {spec!r}")


def gen_truth(stream: SeedStream, spec, p: int) -> np.ndarray:
    """Generate a true covariance matrix; one retry if the draw is not SPD."""
    if p < 1:
        raise ValueError("p must be at least 1")
    for _ in range(2):
        sigma = _draw_truth(stream, spec, p)
        try:
            matcore.cholesky(sigma)
            return sigma
        except NotPositiveDefinite:
            if isinstance(spec, FixedTruth):
                break
    raise SingularTruth(f"generated truth for {spec!r} is not positive definite")
