"""Input validation helpers shared by the filters, estimators and studies."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_positive(value, name, *, allow_zero=False):
    """Return ``value`` as float, raising ``ValueError`` unless it is positive."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_spectrum(values, name="spectrum", *, positive=True):
    """Validate a 1D per-mode eigenvalue array."""
    arr = check_array(np.asarray(values, dtype=float), ensure_2d=False,
                      input_name=name)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def check_observations(Y, n_modes):
    """Validate a sequence of observations with one row per step."""
    Y = check_array(Y, ensure_2d=False, input_name="Y")
    if Y.ndim == 1:
        Y = Y[np.newaxis, :]
    if Y.shape[-1] != n_modes:
        raise ValueError(
            f"observations have {Y.shape[-1]} modes, expected {n_modes}")
    return Y


def check_finite_state(mean, cov, where):
    """Raise ``FloatingPointError`` on NaN means or nonpositive covariances."""
    if not np.all(np.isfinite(mean)):
        raise FloatingPointError(f"non-finite mean at {where}")
    if cov is not None and (not np.all(np.isfinite(cov)) or np.any(cov <= 0)):
        raise FloatingPointError(f"non-finite or nonpositive covariance at {where}")
