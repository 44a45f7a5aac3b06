"""Input validation helpers used by the estimator-facing surfaces."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_token_matrix(tokens, *, width: int | None = None, name: str = "tokens") -> np.ndarray:
    """Coerce a per-token feature matrix to a finite float64 [T x D] array.

    Raises ValueError on shape problems and DataError on non-finite values.
    """
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got ndim={x.ndim}")
    if x.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one token row")
    if width is not None and x.shape[1] != width:
        raise ValueError(f"{name} has width {x.shape[1]}, expected {width}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains non-finite values")
    return x


def as_label_array(labels, *, name: str = "labels") -> np.ndarray:
    """Coerce labels to an int array and require every entry to be 0 or 1."""
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got ndim={y.ndim}")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError(f"{name} must be binary (0 or 1)")
    return y.astype(np.int64)


def check_binary_label(label, *, name: str = "label") -> int:
    """Require a single label to be 0 or 1 and return it as int."""
    value = int(label)
    if value not in (0, 1) or label != value:
        raise DataError(f"{name} must be 0 or 1, got {label!r}")
    return value
