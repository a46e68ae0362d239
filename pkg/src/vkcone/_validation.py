"""Input validation helpers shared by the numerical modules and the CLI."""

import numbers

import numpy as np


class DivergedEnergy(FloatingPointError):
    """Raised when an energy term leaves the finite range."""


def check_thickness(h):
    if not isinstance(h, numbers.Real) or not np.isfinite(h):
        raise ValueError(f"h must be a finite real number, got {h!r}")
    if not 0.0 < h <= 0.5:
        raise ValueError(f"h must satisfy 0 < h <= 1/2, got {h}")
    return float(h)


def check_indentation(delta):
    if not isinstance(delta, numbers.Real) or not np.isfinite(delta):
        raise ValueError(f"delta must be a finite real number, got {delta!r}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must satisfy 0 <= delta <= 1, got {delta}")
    return float(delta)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_finite_array(arr, name):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_nodal(arr, n_nodes, name):
    arr = check_finite_array(arr, name)
    if arr.shape != (n_nodes,):
        raise ValueError(f"{name} must have shape ({n_nodes},), got {arr.shape}")
    return arr
