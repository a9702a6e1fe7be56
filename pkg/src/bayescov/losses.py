"""Matrix loss functions: spectral, Frobenius, spectral Bregman divergences, log-det."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import matcore
from .exceptions import DomainError, NotPositiveDefinite, UnsupportedLoss

FAMILIES = ("spectral", "frobenius", "bregman", "logdet", "spectral_precision")


@dataclass(frozen=True)
class PhiSpec:
    """Scalar convex generator ``phi`` of a spectral Bregman divergence.

    ``kind`` is ``"squared_euclid"``, ``"von_neumann"``, ``"stein"`` or
    ``"custom"``. A custom generator needs ``phi``, its derivative ``dphi`` and
    the lower end ``domain_low`` of its domain; it is checked at construction
    for strict convexity and for ``dphi`` matching a central difference of
    ``phi``.
    """

    kind: str = "stein"
    phi: Optional[Callable] = None
    dphi: Optional[Callable] = None
    domain_low: float = 0.0

    def __post_init__(self):
        if self.kind not in ("squared_euclid", "von_neumann", "stein", "custom"):
            raise ValueError(f"unknown phi kind {self.kind!r}")
        if self.kind == "custom":
            if self.phi is None or self.dphi is None:
                raise ValueError("custom phi needs both phi and dphi")
            _check_custom(self.phi, self.dphi, self.domain_low)

    def value(self, lam):
        lam = np.asarray(lam, dtype=float)
        self._check_domain(lam)
        if self.kind == "squared_euclid":
            return lam * lam
        if self.kind == "von_neumann":
            return lam * np.log(lam) - lam
        if self.kind == "stein":
            return -np.log(lam)
        return np.asarray(self.phi(lam), dtype=float)

    def derivative(self, lam):
        lam = np.asarray(lam, dtype=float)
        self._check_domain(lam)
        if self.kind == "squared_euclid":
            return 2.0 * lam
        if self.kind == "von_neumann":
            return np.log(lam)
        if self.kind == "stein":
            return -1.0 / lam
        return np.asarray(self.dphi(lam), dtype=float)

    def _check_domain(self, lam):
        low = self.domain_low if self.kind == "custom" else (0.0 if self.kind != "squared_euclid" else -np.inf)
        if np.any(lam <= low):
            raise DomainError(f"eigenvalue {lam.min():.3e} outside the domain of phi ({self.kind})")


def _check_custom(phi, dphi, low, upper_span=10.0, points=50, h=1e-6):
    start = low + 1e-3 if np.isfinite(low) else -upper_span
    grid = np.linspace(start + 10 * h, start + upper_span, points)
    fd = (np.asarray(phi(grid + h)) - np.asarray(phi(grid - h))) / (2 * h)
    d = np.asarray(dphi(grid), dtype=float)
    rel = np.abs(fd - d) / np.maximum(np.abs(d), 1e-3)
    if np.any(rel > 1e-6):
        raise ValueError("dphi does not match the derivative of phi")
    if np.any(np.diff(d) <= 0.0):
        raise ValueError("phi is not strictly convex on its domain")


def _pair(a, b):
    a = matcore.as_symmetric(a)
    b = matcore.as_symmetric(b)
    matcore.check_same_shape(a, b)
    return a, b


def _power(value, power):
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    return value if power == 1 else value * value


def sq_spectral_loss(a, b, power: int = 2) -> float:
    """``||a - b||^power`` in spectral norm."""
    a, b = _pair(a, b)
    return float(_power(matcore.spectral_norm(a - b), power))


def sq_frobenius_loss(a, b, scale: float = 1.0) -> float:
    """``scale * ||a - b||_F^2``."""
    a, b = _pair(a, b)
    d = a - b
    return float(scale * np.sum(d * d))


def bregman_divergence(phi: PhiSpec, a, b) -> float:
    """Spectral Bregman divergence ``phi(A) - phi(B) - tr(grad phi(B) (A - B))``.

    ``phi(X)`` is the sum of the scalar generator over the eigenvalues of X and
    ``grad phi(B) = V diag(phi'(lambda)) V^T``.
    """
    a, b = _pair(a, b)
    wa = matcore.eigvalsh(a)
    wb, vb = matcore.eigh(b)
    grad = (vb * phi.derivative(wb)) @ vb.T
    value = np.sum(phi.value(wa)) - np.sum(phi.value(wb)) - np.sum(grad * (a - b))
    return float(value)


def von_neumann_divergence(a, b) -> float:
    """``tr(A log A - A log B - A + B)``."""
    a, b = _pair(a, b)
    la = matcore.matrix_log(a)
    lb = matcore.matrix_log(b)
    return float(np.sum(a * la) - np.sum(a * lb) - np.trace(a) + np.trace(b))


def stein_loss(a, b) -> float:
    """``tr(A B^{-1}) - log det(A B^{-1}) - p``."""
    a, b = _pair(a, b)
    binv = matcore.matrix_inverse(b)
    return float(np.sum(a * binv) - matcore.log_det(a) + matcore.log_det(b) - a.shape[0])


def sq_logdet_loss(a, b) -> float:
    """``(log det A - log det B)^2``."""
    a, b = _pair(a, b)
    return (matcore.log_det(a) - matcore.log_det(b)) ** 2


def sq_spectral_precision_loss(a, b, power: int = 2) -> float:
    """``||A^{-1} - B^{-1}||^power`` in spectral norm."""
    a, b = _pair(a, b)
    matcore.cholesky(a)
    matcore.cholesky(b)
    diff = matcore.matrix_inverse(a) - matcore.matrix_inverse(b)
    return float(_power(matcore.spectral_norm(diff), power))


@dataclass(frozen=True)
class LossSpec:
    """A loss family with its options.

    ``power`` applies to the spectral families and to Frobenius (``power=1``
    gives the unsquared norm); ``scale`` multiplies the final value.
    """

    family: str = "frobenius"
    power: int = 2
    scale: float = 1.0
    phi: Optional[PhiSpec] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedLoss(f"unknown loss family {self.family!r}")
        if self.power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.family == "bregman" and self.phi is None:
            object.__setattr__(self, "phi", PhiSpec("stein"))

    @property
    def label(self) -> str:
        if self.family == "bregman":
            return f"bregman_{self.phi.kind}"
        return self.family

    def __call__(self, estimate, truth) -> float:
        return self.scale * evaluate(self, estimate, truth)


def evaluate(spec: LossSpec, a, b) -> float:
    """Unscaled loss between an estimate ``a`` and the truth ``b``."""
    if spec.family == "spectral":
        return sq_spectral_loss(a, b, spec.power)
    if spec.family == "frobenius":
        v = sq_frobenius_loss(a, b)
        return v if spec.power == 2 else float(np.sqrt(v))
    if spec.family == "bregman":
        return bregman_divergence(spec.phi, a, b)
    if spec.family == "logdet":
        return sq_logdet_loss(a, b)
    return sq_spectral_precision_loss(a, b, spec.power)


def loss_batch(spec: LossSpec, draws: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Scaled loss of every matrix in a stack ``(d, p, p)`` against ``truth``."""
    draws = np.asarray(draws, dtype=float)
    if spec.family == "spectral":
        v = matcore.spectral_norm(draws - truth)
        return spec.scale * (v if spec.power == 1 else v * v)
    if spec.family == "frobenius":
        v = np.sum((draws - truth) ** 2, axis=(-2, -1))
        return spec.scale * (v if spec.power == 2 else np.sqrt(v))
    if spec.family == "logdet":
        w = matcore.eigvalsh(draws)
        if np.any(w <= 0.0):
            raise NotPositiveDefinite("a matrix in the batch is not positive definite")
        d = np.sum(np.log(w), axis=-1) - matcore.log_det(truth)
        return spec.scale * d * d
    return spec.scale * np.array([evaluate(spec, d, truth) for d in draws])
