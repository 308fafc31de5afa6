"""Input validation helpers shared by the estimator classes and configs."""

import numbers

import numpy as np


def check_positive_int(value, name):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value <= 0:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive_real(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_nonnegative_real(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a non-negative finite real, got {value!r}")
    return float(value)


def check_interval(value, name, lo, hi, open_lo=False, open_hi=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real, got {value!r}")
    below = value <= lo if open_lo else value < lo
    above = value >= hi if open_hi else value > hi
    if below or above:
        lob, hib = "(" if open_lo else "[", ")" if open_hi else "]"
        raise ValueError(f"{name} must lie in {lob}{lo}, {hi}{hib}, got {value!r}")
    return float(value)


def check_sine_range(rng, name="angle_sine_range"):
    """Validate a closed sub-interval of [-1, 1] given as a (lo, hi) pair."""
    try:
        lo, hi = (float(rng[0]), float(rng[1]))
    except (TypeError, ValueError, IndexError):
        raise ValueError(f"{name} must be a (lo, hi) pair, got {rng!r}") from None
    if not (-1.0 <= lo <= hi <= 1.0):
        raise ValueError(f"{name} must satisfy -1 <= lo <= hi <= 1, got ({lo}, {hi})")
    return (lo, hi)


def as_complex_batch(X, n_cols, name="X"):
    """Coerce X to a complex (n_samples, n_cols) array.

    Accepts a single length-n_cols vector or a 2-D batch; returns the 2-D
    array together with a flag telling whether the input was 1-D.
    """
    arr = np.asarray(X)
    if not np.issubdtype(arr.dtype, np.number):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.complex128, copy=False)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise ValueError(
            f"{name} must have {n_cols} columns (or be a length-{n_cols} vector), "
            f"got shape {np.asarray(X).shape}"
        )
    return arr, was_1d


def check_finite(arr, name):
    if not np.all(np.isfinite(arr.view(np.float64) if np.iscomplexobj(arr) else arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
