"""Input validation helpers and exception types shared across the package."""

from __future__ import annotations

import numpy as np


class DegenerateGeometryError(ValueError):
    """User position coincides with an anchor position."""


class PoleSingularityError(ValueError):
    """Azimuth derivative requested at a pole of the anchor frame."""


class FilterError(RuntimeError):
    """Base class for numerical failures inside a filter step.

    ``epoch`` is filled in by :func:`vmfaoa.filters.run_filter` when the
    failure happens inside a multi-epoch run.
    """

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch

    def __str__(self) -> str:
        msg = super().__str__()
        if self.epoch is not None:
            return f"epoch {self.epoch}: {msg}"
        return msg


class DegenerateWeightsError(FilterError):
    """All particle weights underflowed to zero."""


class NumericalFailureError(FilterError):
    """Innovation covariance or Cholesky factorization failed."""


def check_finite(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_vectors3(x, name: str = "input") -> np.ndarray:
    """Return ``x`` as a float array whose last axis has length 3."""
    arr = check_finite(x, name)
    if arr.ndim == 0 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must have a trailing dimension of 3, got shape {arr.shape}")
    return arr


def check_unit_vectors(x, name: str = "input", atol: float = 1e-9) -> np.ndarray:
    arr = check_vectors3(x, name)
    norms = np.linalg.norm(arr, axis=-1)
    if not np.allclose(norms, 1.0, atol=atol, rtol=0.0):
        raise ValueError(f"{name} must have unit norm")
    return arr


def check_rotation(R, name: str = "rotation", atol: float = 1e-10) -> np.ndarray:
    R = check_finite(R, name)
    if R.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=atol, rtol=0.0):
        raise ValueError(f"{name} is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > atol:
        raise ValueError(f"{name} must have determinant +1")
    return R


def check_positive(value, name: str, allow_zero: bool = False) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_weights(w, atol: float = 1e-10) -> np.ndarray:
    w = check_finite(w, "weights")
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D array")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if abs(w.sum() - 1.0) > atol:
        raise ValueError("weights must sum to one")
    return w
