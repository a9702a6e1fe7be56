"""Self-check suites for the bound verifiers and closed-form formulas.

Each suite returns a list of :class:`Check` records; :func:`run` collects the
requested suites into a :class:`Report` that serializes to JSON.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List

import numpy as np

from . import bounds, losses, matcore, randmat
from .estimators.posterior import (
    iw_posterior,
    logdet_point_estimate,
)
from .randmat import IwParams, derive_stream
from .risk import ploss_closed_form, ploss_mc
from .specialfn import digamma

VERIFY_SEED = 20171
EULER_GAMMA = 0.57721566490153286061


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)


@dataclass
class Report:
    checks: List[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def counts(self) -> Dict[str, int]:
        ok = sum(c.passed for c in self.checks)
        return {"passed": ok, "failed": len(self.checks) - ok, "total": len(self.checks)}

    def to_dict(self) -> Dict:
        return {"passed": self.passed, "counts": self.counts, "checks": [asdict(c) for c in self.checks]}


def _random_spd(rng_stream, p, low, high):
    """SPD matrix with eigenvalues uniform in [low, high] and a random orthogonal basis."""
    g = rng_stream.standard_normal(p * p).reshape(p, p)
    q = matcore.eigh(matcore.symmetrize(g + g.T)).vectors
    lam = low + (high - low) * rng_stream.uniform(p)
    return matcore.symmetrize((q * lam) @ q.T)


# Suites -------------------------------------------------------------------


def suite_xi() -> List[Check]:
    out = []
    worst = 0.0
    grid = [(1, 0.1), (5, 0.5), (20, 0.3), (100, 0.05), (3, 0.9)]
    for p in range(1, 11):
        for n, eps in grid:
            a, b = bounds.xi_exact(p, n, eps), bounds.xi_bruteforce(p, n, eps)
            worst = max(worst, abs(a - b) / b)
    out.append(Check("xi", "exact_vs_bruteforce", worst <= 1e-12, {"max_rel_err": worst, "tol": 1e-12}))

    a = 0.1
    target = (1.0 - 2.0 * a) ** -0.5
    errs = []
    for p in (10**2, 10**3, 10**4):
        n = 1000 * p
        errs.append(abs(bounds.xi_exact(p, n, bounds.xi_limit_eps(p, n, a)) - target))
    ok = errs[-1] < 0.01 and errs[0] >= errs[1] >= errs[2]
    out.append(Check("xi", "limit", ok, {"abs_err": errs, "target": target, "tol": 0.01}))

    mono = True
    for p in (1, 4, 9):
        vals_n = [bounds.xi_exact(p, n, 0.3) for n in (1, 5, 25, 125)]
        vals_e = [bounds.xi_exact(p, 20, e) for e in (0.05, 0.1, 0.2, 0.4)]
        mono &= min(vals_n + vals_e) >= 1.0
        mono &= all(np.diff(vals_n) > 0) and all(np.diff(vals_e) > 0)
    out.append(Check("xi", "at_least_one_and_monotone", bool(mono)))
    return out


def suite_wishart(draws: int = 100_000) -> List[Check]:
    rep = bounds.wishart_tail_report(10, 100, draws, derive_stream(VERIFY_SEED, 1, 0))
    return [
        Check("wishart", c.name, c.passed, {k: v for k, v in asdict(c).items() if k != "name"})
        for c in rep.checks
    ]


def suite_bregman(pairs: int = 500) -> List[Check]:
    stream = derive_stream(VERIFY_SEED, 2, 0)
    specs = {"von_neumann": losses.PhiSpec("von_neumann"), "stein": losses.PhiSpec("stein")}
    closed = {
        "von_neumann": losses.von_neumann_divergence,
        "stein": losses.stein_loss,
        "squared_euclid": lambda a, b: losses.sq_frobenius_loss(a, b),
    }
    ratios = {k: [] for k in specs}
    worst_path = 0.0
    for _ in range(pairs):
        p = 2 + int(stream.uniform(1)[0] * 4)
        x = _random_spd(stream, p, 0.5, 4.0)
        y = _random_spd(stream, p, 0.5, 4.0)
        f2 = losses.sq_frobenius_loss(x, y)
        for name, phi in specs.items():
            ratios[name].append(losses.bregman_divergence(phi, x, y) / f2)
        for name, fn in closed.items():
            g = losses.bregman_divergence(losses.PhiSpec(name), x, y)
            c = fn(x, y)
            worst_path = max(worst_path, abs(g - c) / max(abs(c), 1e-300))
    out = []
    for name, r in ratios.items():
        m, big = float(min(r)), float(max(r))
        out.append(Check("bregman", f"sandwich_{name}", 0.0 < m <= big < math.inf, {"m": m, "M": big}))
    out.append(Check("bregman", "generic_matches_closed_forms", worst_path <= 1e-9, {"max_rel_err": worst_path}))
    return out


def suite_logdet_remainder(count: int = 1000) -> List[Check]:
    stream = derive_stream(VERIFY_SEED, 3, 0)
    bad = 0
    worst = -math.inf
    for _ in range(count):
        p = 1 + int(stream.uniform(1)[0] * 6)
        g = stream.standard_normal(p * p).reshape(p, p)
        b = matcore.symmetrize(g + g.T)
        b *= 0.5 * stream.uniform(1)[0] / matcore.spectral_norm(b)
        r, f2 = bounds.logdet_remainder(b)
        if not (r >= 0.0 and r <= f2):
            bad += 1
        worst = max(worst, r / f2 if f2 > 0 else 0.0)
    return [Check("logdet_remainder", "0 <= R <= ||B||_F^2", bad == 0, {"violations": bad, "max_ratio": worst})]


def _affinity_quadrature(s0, s1, s2, points=20001):
    """``integral f1 f2 / f0`` for scalar variances by the trapezoid rule on a wide grid."""
    curv = 1 / s1 + 1 / s2 - 1 / s0
    half = 40.0 / math.sqrt(curv)
    x = np.linspace(-half, half, points)
    y = np.exp(-0.5 * x * x * curv) * math.sqrt(s0 / (2 * math.pi * s1 * s2))
    return math.fsum((y[1:] + y[:-1]) * np.diff(x) / 2.0)


def suite_chi_affinity(count: int = 50) -> List[Check]:
    stream = derive_stream(VERIFY_SEED, 4, 0)
    worst = 0.0
    for _ in range(count):
        s0 = 0.5 + 2.0 * stream.uniform(1)[0]
        while True:
            s1, s2 = 0.5 + 2.0 * stream.uniform(2)
            if 1 / s1 + 1 / s2 - 1 / s0 > 0.05:
                break
        a = bounds.chi_affinity([[s0]], [[s1]], [[s2]])
        worst = max(worst, abs(a - _affinity_quadrature(s0, s1, s2)))
    return [Check("chi_affinity", "p1_vs_quadrature", worst <= 1e-8, {"max_abs_err": worst, "tol": 1e-8})]


def suite_closed_form_mc(posteriors: int = 20, draws: int = 20_000) -> List[Check]:
    stream = derive_stream(VERIFY_SEED, 5, 0)
    out = []
    for loss in (losses.LossSpec("frobenius"), losses.LossSpec("logdet")):
        worst = 0.0
        for i in range(posteriors):
            p = 2 + i % 3
            n = 40 + 10 * (i % 4)
            sigma0 = _random_spd(stream, p, 0.5, 3.0)
            x = randmat.sample_mvn(stream, sigma0, n)
            post = iw_posterior(IwParams(float(p), np.eye(p)), n, randmat.sample_covariance(x))
            exact = ploss_closed_form(post, sigma0, loss)
            est, se = ploss_mc(post, sigma0, loss, draws, stream)
            worst = max(worst, abs(est - exact) / se)
        out.append(Check("closed_form_mc", f"{loss.family}_within_4se", worst <= 4.0, {"max_z": worst}))
    return out


def _digamma_half_integer(m2: int) -> float:
    """``psi(m2 / 2)`` for a positive integer ``m2`` from the finite harmonic sums."""
    if m2 % 2 == 0:
        m = m2 // 2
        return -EULER_GAMMA + math.fsum(1.0 / k for k in range(1, m))
    m = (m2 - 1) // 2
    return -EULER_GAMMA - 2.0 * math.log(2.0) + math.fsum(2.0 / (2 * k - 1) for k in range(1, m + 1))


def umvue_exact_bias(p: int, n: int) -> float:
    """Exact bias of the log-det UMVUE, with ``E log chi2_k = psi(k/2) + log 2`` from harmonic sums."""
    # log det S - log det Sigma0 = sum_j log chi2_{n-j} - p log n  (Bartlett)
    expected = math.fsum(_digamma_half_integer(n - j) + math.log(2.0) for j in range(p)) - p * math.log(n)
    correction = p * math.log(n / 2.0) - float(np.sum(digamma((n - np.arange(p)) / 2.0)))
    return expected + correction


def suite_umvue(replicates: int = 20_000) -> List[Check]:
    worst = 0.0
    for p, n in ((1, 10), (3, 7), (5, 50), (10, 101), (25, 625)):
        worst = max(worst, abs(umvue_exact_bias(p, n)))
    out = [Check("umvue", "exact_bias", worst <= 1e-10, {"max_abs_bias": worst, "tol": 1e-10})]

    p, n = 5, 50
    sigma0 = _random_spd(derive_stream(VERIFY_SEED, 6, 0), p, 0.5, 3.0)
    ld0 = matcore.log_det(sigma0)
    low = matcore.cholesky(sigma0)
    stream = derive_stream(VERIFY_SEED, 6, 1)
    errs = np.empty(replicates)
    for r in range(replicates):
        x = stream.standard_normal(n * p).reshape(n, p) @ low.T
        errs[r] = logdet_point_estimate("umvue", x.T @ x / n, n) - ld0
    mean = float(errs.mean())
    se = float(errs.std(ddof=1) / math.sqrt(replicates))
    out.append(Check("umvue", "mc_unbiased", abs(mean) <= 4 * se, {"mean_error": mean, "se": se}))
    return out


SUITES: Dict[str, Callable[[], List[Check]]] = {
    "xi": suite_xi,
    "wishart": suite_wishart,
    "bregman": suite_bregman,
    "logdet_remainder": suite_logdet_remainder,
    "chi_affinity": suite_chi_affinity,
    "closed_form_mc": suite_closed_form_mc,
    "umvue": suite_umvue,
}


def run(suite: str = "all") -> Report:
    """Run one suite by name, or every suite for ``"all"``."""
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise KeyError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    checks: List[Check] = []
    for name in names:
        checks.extend(SUITES[name]())
    return Report(checks)
