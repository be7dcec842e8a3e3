"""Input validation helpers shared by the estimator API and the domain types."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError


def check_data_matrix(X, *, min_rows: int = 1, name: str = "X") -> np.ndarray:
    """Validate a samples-by-variables matrix and return it as float64.

    Accepts anything array-like with shape (n_samples, n_features). Raises
    InvalidInputError on wrong dimensionality, non-finite entries, or too
    few rows.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < min_rows:
        raise InvalidInputError(
            f"{name} needs at least {min_rows} row(s), got {arr.shape[0]}"
        )
    if arr.shape[1] < 1:
        raise InvalidInputError(f"{name} needs at least one column")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_correlation_matrix(corr, *, name: str = "corr") -> np.ndarray:
    """Validate a square correlation matrix (symmetric, unit diagonal)."""
    arr = np.asarray(corr, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    if not np.allclose(arr, arr.T, atol=1e-8):
        raise InvalidInputError(f"{name} is not symmetric")
    if not np.allclose(np.diag(arr), 1.0, atol=1e-8):
        raise InvalidInputError(f"{name} does not have a unit diagonal")
    return arr


def check_vertex(v: int, p: int) -> None:
    if not (isinstance(v, (int, np.integer)) and 1 <= v <= p):
        raise InvalidInputError(f"vertex {v!r} outside 1..{p}")
