"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array


def check_series(x, min_length=1, name="series"):
    """Return ``x`` as a finite 1-D float64 array of at least ``min_length``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} too short: length {arr.size} < {min_length}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_panel(X, min_columns=2, min_rows=3, name="panel"):
    """Return ``X`` as a finite 2-D (T, k) float64 array."""
    arr = check_array(X, dtype=np.float64, ensure_min_samples=min_rows, ensure_min_features=min_columns)
    return arr
