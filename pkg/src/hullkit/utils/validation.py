"""Input validation helpers shared by the estimators and the I/O layer."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

SUPPORTED_BIT_DEPTHS = (8, 10)


def check_bit_depth(bit_depth):
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise ValueError(f"bit depth must be one of {SUPPORTED_BIT_DEPTHS}, got {bit_depth!r}")
    return int(bit_depth)


def check_geometry(width, height):
    """Validate 4:2:0 luma geometry: positive and even in both dimensions."""
    for name, value in (("width", width), ("height", height)):
        if not isinstance(value, numbers.Integral) or value <= 0:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if value % 2:
            raise ValueError(f"{name} must be even for 4:2:0 content, got {value}")
    return int(width), int(height)


def sample_dtype(bit_depth):
    return np.uint8 if bit_depth == 8 else np.uint16


def check_plane(plane, shape, bit_depth, name="plane"):
    """Coerce ``plane`` to the storage dtype for ``bit_depth`` and check range."""
    arr = np.asarray(plane)
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise ValueError(f"{name} samples must be integers")
    peak = (1 << bit_depth) - 1
    if arr.size and (arr.min() < 0 or arr.max() > peak):
        raise ValueError(f"{name} samples must lie in [0, {peak}]")
    return np.ascontiguousarray(arr, dtype=sample_dtype(bit_depth))


def check_feature_matrix(X, n_features):
    """2-D float64 matrix with exactly ``n_features`` finite columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and positive, got {value!r}")
    return float(value)
