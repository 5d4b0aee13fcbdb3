"""Input validation helpers shared by the estimator-style APIs."""

from __future__ import annotations

import math

import numpy as np

from .errors import AlignmentError

# Slack added before flooring/ceiling fractional targets so that values like
# 0.3 * 10 (== 2.9999999999999996 in binary) resolve to the intended integer.
_FRAC_EPS = 1e-9


def check_fraction(value, name: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValueError(f"{name} must be a number in [0, 1], got {value!r}")
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    return value


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def floor_frac(fraction: float, count: int) -> int:
    """floor(fraction * count), absorbing binary-representation dust."""
    return max(0, min(count, math.floor(fraction * count + _FRAC_EPS)))


def ceil_frac(fraction: float, count: int) -> int:
    """ceil(fraction * count), absorbing binary-representation dust."""
    return max(0, min(count, math.ceil(fraction * count - _FRAC_EPS)))


def check_aligned(n_rows: int, manifest, what: str) -> None:
    if n_rows != manifest.n_docs:
        raise AlignmentError(
            f"{what} has {n_rows} rows but the manifest has {manifest.n_docs} documents"
        )


def as_unit_rows(X, *, what: str = "matrix", tol: float = 1e-5) -> np.ndarray:
    """Return float64 unit rows, rejecting inputs that are not L2-normalized."""
    data = X.data if hasattr(X, "data") and hasattr(X, "normalized") else X
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"{what} must be 2-dimensional")
    norms = np.linalg.norm(data, axis=1)
    if data.shape[0] and np.max(np.abs(norms - 1.0)) > tol:
        raise ValueError(f"{what} must be unit-normalized (row norms within {tol} of 1)")
    # Scrub residual float32 dust so cosine math is stable in float64.
    return data / norms[:, None] if data.shape[0] else data
