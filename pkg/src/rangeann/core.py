"""Shared primitives: error types, the distance metric, small validation helpers.

Distances are squared Euclidean (L2) everywhere internally; square roots are
taken only at output boundaries. Comparing squared values preserves nearest
neighbor order and avoids n*d sqrt calls in the hot loops.
"""

from __future__ import annotations

import numpy as np


class InvalidInputError(ValueError):
    """Raised when user-supplied data or parameters violate a contract."""


class CorruptIndexError(RuntimeError):
    """Raised when an index file fails magic, structure, or checksum validation."""


class InvalidConfigWarning(UserWarning):
    """Emitted for legal but suspicious parameter combinations."""


def as_vector(x, dtype=np.float32) -> np.ndarray:
    """Coerce to a contiguous 1-D array of the given dtype."""
    v = np.ascontiguousarray(x, dtype=dtype)
    if v.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def distance(u, v) -> float:
    """Squared Euclidean distance between two vectors.

    Accumulates in float64 regardless of input dtype. Raises
    InvalidInputError on dimension mismatch.
    """
    a = as_vector(u, np.float64)
    b = as_vector(v, np.float64)
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError(
            f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    diff = a - b
    return float(np.dot(diff, diff))


def reported_distance(sq: float) -> float:
    """Convert an internal squared distance to the reported (true) distance."""
    return float(np.sqrt(sq))
