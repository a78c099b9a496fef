"""Small input-checking helpers shared by the estimators."""

import numpy as np

from .exceptions import NonFiniteSampleError, ValidationError

STOCHASTIC_ATOL = 1e-12


def check_probability_vector(p, name="probability vector", atol=STOCHASTIC_ATOL):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-d array")
    if np.any(p < 0):
        raise ValidationError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def check_stochastic_matrix(P, n_states, name="transition matrix", atol=STOCHASTIC_ATOL):
    P = np.asarray(P, dtype=float)
    if P.shape != (n_states, n_states):
        raise ValidationError(f"{name} has shape {P.shape}, expected {(n_states, n_states)}")
    if np.any(P < 0):
        raise ValidationError(f"{name} has negative entries")
    rows = P.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > atol):
        raise ValidationError(f"{name} rows do not sum to 1 (max error {np.abs(rows - 1).max():.3g})")
    return P


def check_batch(X, name="batch", ndim=2):
    """Return ``X`` as a float array of paths, rejecting non-finite entries.

    Paths are rows. A 1-d input is read as a single path.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == ndim - 1:
        X = X[None, ...]
    if X.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-d (paths along axis 0), got shape {X.shape}")
    bad = ~np.isfinite(X)
    if bad.any():
        path = int(np.argwhere(bad)[0][0])
        raise NonFiniteSampleError(f"{name} has a non-finite value in path {path}", index=path)
    return X


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value
