"""Dense numerical kernels shared across the package.

Matrices are plain 2-D C-contiguous float64 ndarrays.  Every public
operation validates shapes against its contract and guarantees a finite
result; the heavy lifting is delegated to numpy/scipy.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "as_matrix",
    "matmul",
    "row_softmax",
    "layer_norm",
    "gelu",
    "mean_std_median",
    "cosine_similarity",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def as_matrix(a) -> np.ndarray:
    """Coerce input to a 2-D float64 array, rejecting other ranks."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got array of shape {m.shape}")
    return m


def _check_finite(m: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{op} produced non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Dense product a @ b with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} times "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    return _check_finite(a @ b, "matmul")


def row_softmax(a) -> np.ndarray:
    """Softmax over each row, stabilized by max subtraction."""
    a = as_matrix(a)
    if a.size == 0:
        return a.copy()
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return _check_finite(e / e.sum(axis=1, keepdims=True), "row_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-6) -> np.ndarray:
    """Per-row standardization (population variance) followed by affine."""
    x = as_matrix(x)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ValueError(
            f"layer_norm affine length mismatch: x has {x.shape[1]} columns, "
            f"gain has shape {gain.shape}, bias has shape {bias.shape}"
        )
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    normed = (x - mu) / np.sqrt(var + eps)
    return _check_finite(normed * gain + bias, "layer_norm")


def gelu(x) -> np.ndarray:
    """Exact GELU x * Phi(x) with the Gaussian CDF (no tanh approximation)."""
    x = as_matrix(x)
    return _check_finite(0.5 * x * (1.0 + erf(x * _INV_SQRT2)), "gelu")


def mean_std_median(v) -> tuple[float, float, float]:
    """Mean, population standard deviation and median of a vector.

    The std divides by N (population convention); the median of an
    even-length vector is the mean of the two middle order statistics.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("mean_std_median of an empty vector")
    return float(v.mean()), float(v.std()), float(np.median(v))


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two flattened vectors.

    Degenerate conventions: identical inputs (including zero/zero) give
    exactly 1.0, a zero vector against a nonzero one gives 0.0.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"cosine_similarity length mismatch: {u.size} vs {v.size}")
    if np.array_equal(u, v):
        return 1.0
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
