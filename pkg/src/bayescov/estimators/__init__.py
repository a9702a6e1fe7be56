"""Posterior updates, point estimators and their scikit-learn wrappers."""

from .covariance import (
    InverseWishartCovariance,
    LogDetEstimator,
    MixturePriorCovariance,
    SampleCovariance,
    TaperingCovariance,
    TruncatedInverseWishartCovariance,
)
from .posterior import (
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

__all__ = [
    "InverseWishartCovariance",
    "LogDetEstimator",
    "MixturePriorCovariance",
    "NuRule",
    "PointMass",
    "PosteriorIw",
    "PosteriorMixture",
    "SampleCovariance",
    "TaperingCovariance",
    "TruncatedInverseWishartCovariance",
    "TruncatedPosterior",
    "default_taper_k",
    "iw_posterior",
    "logdet_point_estimate",
    "logdet_posterior_moments",
    "mixture_posterior",
    "posterior_element_moments",
    "posterior_mean",
    "prior_scale_matrix",
    "tapering_estimator",
    "tapering_weights",
    "truncated_posterior_mean_mc",
]
