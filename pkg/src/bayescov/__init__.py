"""Bayesian decision-theoretic covariance estimation: priors, posteriors, losses, risks and lower bounds."""

from . import bounds, estimators, losses, matcore, randmat, risk, specialfn
from .exceptions import BayesCovError

__version__ = "0.1.0"

__all__ = ["BayesCovError", "bounds", "estimators", "losses", "matcore", "randmat", "risk", "specialfn"]
