import numbers

import numpy as np


def check_index(value, upper, name):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if not 0 <= value < upper:
        raise IndexError(f"{name}={value} out of range [0, {upper})")
    return int(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def as_points(t, n):
    """Coerce a single tuple or a batch of tuples to a finite ``(N, n)`` array."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"expected feature tuples of length {n}, got shape {np.shape(t)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature values must be finite")
    return arr
