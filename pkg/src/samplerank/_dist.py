"""Exact pairwise squared Euclidean distances, chunked for bounded memory.

Distances come from explicit coordinate differences rather than the
norm-expansion trick: identical points must give exactly zero (the IoU
predictor's zero-distance rule and the coverage oracle's self-matching
both rely on it), and every caller must see bit-identical values for the
same pair of points.
"""

from __future__ import annotations

import numpy as np

_CHUNK_BUDGET = 8_000_000  # floats per difference block


def sq_dist_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) matrix of squared distances between row vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]))
    chunk = max(1, _CHUNK_BUDGET // max(1, b.size))
    for start in range(0, a.shape[0], chunk):
        block = a[start : start + chunk]
        out[start : start + chunk] = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return out
