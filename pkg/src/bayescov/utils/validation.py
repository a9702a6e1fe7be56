"""Input validation helpers shared by the estimator classes."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from ..randmat import SeedStream, derive_stream


def check_data(X, min_samples: int = 1) -> np.ndarray:
    """Validate an ``(n_samples, n_features)`` float matrix of observations."""
    return check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=min_samples)


def check_stream(random_state) -> SeedStream:
    """Turn ``None``, an int seed or a :class:`SeedStream` into a stream.

    An int ``s`` maps to ``derive_stream(s, 0, 0)``; ``None`` means seed 0 so
    results stay reproducible by default.
    """
    if isinstance(random_state, SeedStream):
        return random_state
    if random_state is None:
        return derive_stream(0, 0, 0)
    if isinstance(random_state, numbers.Integral):
        return derive_stream(int(random_state), 0, 0)
    raise ValueError(f"random_state must be None, an int or a SeedStream, got {random_state!r}")
