"""Scikit-learn style covariance and log-determinant estimators.

All estimators assume mean-zero data: the sample covariance is
``X^T X / n`` with no centering.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .. import matcore
from ..randmat import IwParams, TruncIwParams, sample_covariance
from ..utils.validation import check_data, check_stream
from .posterior import (
    NuRule,
    default_taper_k,
    iw_posterior,
    logdet_point_estimate,
    logdet_posterior_moments,
    mixture_posterior,
    posterior_mean,
    prior_scale_matrix,
    tapering_estimator,
    truncated_posterior_mean_mc,
)


class _CovarianceMixin:
    def _set_sample_stats(self, X):
        X = check_data(X)
        self.n_samples_, self.n_features_in_ = X.shape
        self.sample_covariance_ = sample_covariance(X)
        return X

    def _prior(self, p):
        n = self.n_samples_
        nu = NuRule.parse(self.nu).resolve(n, p)
        return IwParams(nu, prior_scale_matrix(self.prior_scale, p))

    def error_norm(self, comp_cov, norm="frobenius", squared=True):
        """Distance between ``comp_cov`` and the fitted ``covariance_``."""
        check_is_fitted(self, "covariance_")
        diff = np.asarray(comp_cov, dtype=float) - self.covariance_
        if norm == "frobenius":
            value = float(matcore.frobenius_norm(diff))
        elif norm == "spectral":
            value = float(matcore.spectral_norm(diff))
        else:
            raise ValueError(f"unknown norm {norm!r}")
        return value * value if squared else value


class SampleCovariance(_CovarianceMixin, BaseEstimator):
    """Mean-zero sample covariance ``X^T X / n``."""

    def fit(self, X, y=None):
        self._set_sample_stats(X)
        self.covariance_ = self.sample_covariance_
        return self


class InverseWishartCovariance(_CovarianceMixin, BaseEstimator):
    """Posterior under an inverse-Wishart prior ``IW_p(nu, A)``.

    Parameters
    ----------
    nu : float or str, default="p"
        Prior degrees of freedom, either a number or a rule resolved from
        the data shape: ``"p"``, ``"n"``, ``"p+1"``, ``"sqrt(n/p)"``.
    prior_scale : None, "identity", float or array of shape (p, p), default=None
        Prior scale ``A``; ``None`` is the zero matrix (improper prior).

    Attributes
    ----------
    posterior_ : PosteriorIw
        Posterior ``IW_p(n + nu, n S + A)``.
    covariance_ : ndarray of shape (p, p)
        Posterior mean.
    """

    def __init__(self, nu="p", prior_scale=None):
        self.nu = nu
        self.prior_scale = prior_scale

    def fit(self, X, y=None):
        self._set_sample_stats(X)
        prior = self._prior(self.n_features_in_)
        self.posterior_ = iw_posterior(prior, self.n_samples_, self.sample_covariance_)
        self.covariance_ = posterior_mean(self.posterior_)
        return self

    def sample(self, n_draws, random_state=None):
        """Draw covariance matrices from the posterior, shape ``(n_draws, p, p)``."""
        check_is_fitted(self, "posterior_")
        return self.posterior_.sample(check_stream(random_state), n_draws)

    def logdet_moments(self):
        """Posterior mean and variance of ``log det Sigma``."""
        check_is_fitted(self, "posterior_")
        return logdet_posterior_moments(self.posterior_)


class MixturePriorCovariance(_CovarianceMixin, BaseEstimator):
    """Inverse-Wishart prior when ``p <= gamma n``, point mass at ``I_p`` otherwise."""

    def __init__(self, nu="p", prior_scale="identity", gamma=0.5):
        self.nu = nu
        self.prior_scale = prior_scale
        self.gamma = gamma

    def fit(self, X, y=None):
        self._set_sample_stats(X)
        p = self.n_features_in_
        self.posterior_ = mixture_posterior(
            self._prior(p), self.gamma, self.n_samples_, p, self.sample_covariance_
        )
        if self.posterior_.is_point_mass:
            self.covariance_ = self.posterior_.branch.matrix.copy()
        else:
            self.covariance_ = posterior_mean(self.posterior_.branch)
        return self

    def sample(self, n_draws, random_state=None):
        check_is_fitted(self, "posterior_")
        return self.posterior_.sample(check_stream(random_state), n_draws)


class TruncatedInverseWishartCovariance(_CovarianceMixin, BaseEstimator):
    """Posterior mean under an inverse-Wishart prior truncated to eigenvalues in ``[k1, k2]``.

    No closed form exists, so ``covariance_`` is a Monte Carlo average of
    ``n_draws`` rejection-sampled posterior draws; ``covariance_se_`` holds the
    entrywise standard errors.
    """

    def __init__(self, nu="p", prior_scale="identity", k1=1e-3, k2=1e3, n_draws=500, max_attempts=1_000_000, random_state=None):
        self.nu = nu
        self.prior_scale = prior_scale
        self.k1 = k1
        self.k2 = k2
        self.n_draws = n_draws
        self.max_attempts = max_attempts
        self.random_state = random_state

    def fit(self, X, y=None):
        self._set_sample_stats(X)
        post = iw_posterior(self._prior(self.n_features_in_), self.n_samples_, self.sample_covariance_)
        self.posterior_params_ = TruncIwParams(post.params, self.k1, self.k2)
        self.covariance_, self.covariance_se_ = truncated_posterior_mean_mc(
            self.posterior_params_, self.n_draws, check_stream(self.random_state), self.max_attempts
        )
        return self


class TaperingCovariance(_CovarianceMixin, BaseEstimator):
    """Tapered sample covariance with bandwidth ``k`` (even).

    ``k=None`` uses the even integer nearest to ``sqrt(n)``.
    """

    def __init__(self, k=None):
        self.k = k

    def fit(self, X, y=None):
        self._set_sample_stats(X)
        self.k_ = default_taper_k(self.n_samples_) if self.k is None else int(self.k)
        self.covariance_ = tapering_estimator(self.sample_covariance_, self.k_)
        return self


class LogDetEstimator(BaseEstimator):
    """Estimator of ``log det Sigma``.

    Parameters
    ----------
    method : {"umvue", "mle", "bayes"}, default="umvue"
    nu, prior_scale
        Inverse-Wishart prior for ``method="bayes"``; ``nu=0`` with a zero
        scale reproduces the UMVUE.
    """

    def __init__(self, method="umvue", nu=0, prior_scale=None):
        self.method = method
        self.nu = nu
        self.prior_scale = prior_scale

    def fit(self, X, y=None):
        X = check_data(X)
        n, p = X.shape
        self.n_samples_, self.n_features_in_ = n, p
        s = sample_covariance(X)
        prior = None
        if self.method == "bayes":
            prior = IwParams(NuRule.parse(self.nu).resolve(n, p), prior_scale_matrix(self.prior_scale, p))
        self.logdet_ = logdet_point_estimate(self.method, s, n, prior)
        return self
