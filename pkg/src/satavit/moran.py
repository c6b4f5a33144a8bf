"""Spatial autocorrelation scores over token embeddings.

The pipeline: each token is collapsed to a scalar "global context"
attribute (its feature mean), the attribute vector is standardized, a
local Moran statistic is contracted against a token-closeness weight
matrix, and the result is standardized again into the per-token score
vector ``s``.

The local statistic is the diagonal of (z z^t W), i.e. the contraction
runs over the FIRST index of W:

    I[i] = z[i] * sum_j z[j] * W[j, i]

For a symmetric W this coincides with the textbook row convention
z[i] * sum_j W[i, j] z[j]; for asymmetric attention-derived weights the
two differ, and ``row_convention=True`` switches to the latter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensorops import as_matrix, mean_std_median

__all__ = [
    "SpatialScores",
    "global_attribute",
    "z_normalize",
    "local_moran",
    "spatial_scores",
]


@dataclass(frozen=True)
class SpatialScores:
    """Normalized local Moran scores plus the summary stats the band needs."""

    s: np.ndarray
    mean_s: float
    abs_median_s: float
    raw_i: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, s, raw_i=None) -> "SpatialScores":
        """Build from an explicit score vector, deriving the summaries."""
        s = np.asarray(s, dtype=np.float64).ravel()
        if s.size == 0:
            raise ValueError("SpatialScores needs at least one score")
        raw = s.copy() if raw_i is None else np.asarray(raw_i, dtype=np.float64).ravel()
        mean_s, _, median_s = mean_std_median(s)
        return cls(s=s, mean_s=mean_s, abs_median_s=abs(median_s), raw_i=raw)


def global_attribute(x) -> np.ndarray:
    """Per-token scalar attribute: the mean over the feature dimension."""
    x = as_matrix(x)
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"token tensor must be non-empty, got shape {x.shape}")
    return x.mean(axis=1)


def z_normalize(a) -> np.ndarray:
    """Standardize to mean 0 / population std 1; constant input maps to zeros.

    The constant case is detected by exact element equality rather than
    by sigma == 0: a constant vector whose mean is not representable
    yields a tiny nonzero float sigma, which would otherwise blow the
    degenerate case up into +-1 scores.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("cannot normalize an empty vector")
    if np.all(a == a[0]):
        return np.zeros_like(a)
    sigma = a.std()
    if sigma == 0.0:
        return np.zeros_like(a)
    return (a - a.mean()) / sigma


def local_moran(z, w, row_convention: bool = False) -> np.ndarray:
    """diag(z z^t W) without materializing the N x N outer product.

    Contracting the weight column first keeps the cost at O(N^2):
    I = z * (W^t z).  With ``row_convention`` the contraction runs over
    the second index instead: I = z * (W z).
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    w = as_matrix(w)
    n = z.size
    if w.shape != (n, n):
        raise ValueError(
            f"weight matrix shape {w.shape} does not match {n} attribute values"
        )
    contracted = w @ z if row_convention else w.T @ z
    return z * contracted


def spatial_scores(x, w, row_convention: bool = False) -> SpatialScores:
    """Full score pipeline over a token tensor and a weight matrix."""
    x = as_matrix(x)
    z = z_normalize(global_attribute(x))
    raw = local_moran(z, w, row_convention=row_convention)
    s = z_normalize(raw)
    mean_s, _, median_s = mean_std_median(s)
    return SpatialScores(s=s, mean_s=mean_s, abs_median_s=abs(median_s), raw_i=raw)
