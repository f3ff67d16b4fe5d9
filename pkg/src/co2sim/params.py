"""Dense parameter-vector arithmetic shared by every algorithm.

Parameters are plain 1-D float64 numpy arrays. Every public function here
validates its inputs and refuses to return non-finite values.
"""

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a parameter vector picks up NaN or Inf."""


def as_param(values, name="vector"):
    """Copy ``values`` into a fresh float64 vector and validate it."""
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    return check_finite(v, name)


def check_finite(v, name="vector"):
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise NonFiniteError(f"{name} has non-finite entry at index {bad}: {v[bad]}")
    return v


def _same_length(a, b):
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def average(vectors):
    """Coordinate-wise mean in a fixed ascending worker order.

    Computed as v0 + (sum_{i>=1} (v_i - v0)) / G with the sum taken in list
    order. The fixed order makes the result bit-reproducible, and pivoting
    on the first vector makes the mean of identical copies exact for any G
    (a plain sum / G is not: three copies of 0.1 average to 0.10000000000000002).
    """
    if len(vectors) == 0:
        raise ValueError("cannot average an empty list")
    first = np.asarray(vectors[0], dtype=np.float64)
    if first.ndim != 1:
        raise ValueError(f"vectors must be 1-D, got shape {first.shape}")
    spread = np.zeros_like(first)
    for v in vectors[1:]:
        v = np.asarray(v, dtype=np.float64)
        _same_length(first, v)
        spread += v - first
    return check_finite(first + spread / len(vectors), "average")


def clip_elementwise(v, phi):
    """Coordinate-wise clip into ``[-phi, phi]``."""
    if not phi > 0:
        raise ValueError(f"clip threshold must be positive, got {phi}")
    return check_finite(np.minimum(np.maximum(v, -phi), phi), "clip")


def elementwise_abs_diff(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_length(a, b)
    return check_finite(np.abs(a - b), "abs_diff")


def l2_norm(v):
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))
