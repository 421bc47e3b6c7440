"""Shared input-validation helpers used across estimators and pipeline stages."""

from __future__ import annotations

import numpy as np

SIMPLEX_ATOL = 1e-9


def as_float_array(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite values."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_non_negative(arr: np.ndarray, name: str = "array") -> None:
    if np.any(np.asarray(arr) < 0):
        raise ValueError(f"{name} must be non-negative")


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(np.asarray(arr))):
        raise ValueError(f"{name} contains non-finite values")


def check_probability_rows(arr: np.ndarray, name: str = "distribution",
                           atol: float = SIMPLEX_ATOL) -> None:
    """Every row must be a probability vector: entries >= 0, sum 1 within atol."""
    rows = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if np.any(rows < 0):
        raise ValueError(f"{name} has negative entries")
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{name} rows must sum to 1 within {atol} (max deviation {worst:g})")


def check_binary_labels(labels) -> np.ndarray:
    """Coerce labels to an int array of 0/1, rejecting anything else."""
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-dimensional, got shape {y.shape}")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"labels must be binary 0/1, got values {vals}")
    return y.astype(np.int64)


def check_consistent_length(*arrays) -> int:
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inputs have mismatched lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def check_scores(scores) -> np.ndarray:
    """Classifier scores: 1-D, finite, within [0, 1]."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"scores must be 1-dimensional, got shape {s.shape}")
    check_finite(s, "scores")
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise ValueError("scores must lie in [0, 1]")
    return s
