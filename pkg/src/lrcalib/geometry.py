"""Vector primitives on the unit hypersphere.

Feature vectors are plain 1-D float64 numpy arrays. Nothing here keeps
state; every function is safe to call concurrently.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ZeroVector

EPS_NORM = 1e-12


def as_vector(v, name="vector") -> np.ndarray:
    """Coerce ``v`` to a finite 1-D float64 array of length >= 2."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DimensionMismatch(f"{name} must have dimension >= 2")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def normalize(v) -> np.ndarray:
    """Project ``v`` onto the unit sphere.

    Raises
    ------
    ZeroVector
        If ``||v|| <= 1e-12``.
    """
    v = as_vector(v)
    n = np.linalg.norm(v)
    if n <= EPS_NORM:
        raise ZeroVector("cannot normalize a (near-)zero vector")
    return v / n


def normalize_rows(m) -> np.ndarray:
    """Row-wise :func:`normalize` for a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= EPS_NORM):
        raise ZeroVector(f"row {int(np.argmin(norms))} has (near-)zero norm")
    return m / norms[:, None]


def cosine_sim(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] after rounding."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    _check_same_dim(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= EPS_NORM or nb <= EPS_NORM:
        raise ZeroVector("cosine similarity of a (near-)zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def difference_vector(x_unit, p_unit) -> np.ndarray:
    """Offset of a normalized feature from a normalized prototype."""
    x = as_vector(x_unit, "x")
    p = as_vector(p_unit, "prototype")
    _check_same_dim(x, p)
    return x - p


def softmax(scores) -> np.ndarray:
    """Numerically stable softmax of a 1-D score sequence."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise EmptyInput("softmax needs a nonempty 1-D sequence")
    if not np.all(np.isfinite(s)):
        raise ValueError("softmax scores must be finite")
    e = np.exp(s - s.max())
    return e / e.sum()


def normalized_euclidean(a, b) -> float:
    """Euclidean distance between the normalized versions of ``a`` and ``b``.

    Lies in [0, 2]; equals ``sqrt(2 - 2 cos(a, b))``.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    _check_same_dim(a, b)
    return float(np.linalg.norm(normalize(a) - normalize(b)))
