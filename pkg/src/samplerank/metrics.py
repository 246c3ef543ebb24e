"""Intersection-over-union on masks and nearest-neighbour IoU prediction.

Samples without ground truth get their IoU estimated from the labelled
reference set: the k nearest references in reduced space vote with
inverse-distance weights, so the estimate always stays inside the range
spanned by the neighbours' IoU values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._dist import sq_dist_matrix
from .data import BinaryMask, DataFormatError

DEFAULT_KNN_K = 5

_IOP_MAGIC = b"IOP1"


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a AND b| / |a OR b|; two empty masks agree perfectly and score 1.0."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


@dataclass(frozen=True)
class IouPredictor:
    """Reference embeddings with measured IoU; prediction is lazy k-NN."""

    points: np.ndarray  # (n, R)
    ious: np.ndarray    # (n,)
    k: int

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        ious = np.asarray(self.ious, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError("reference points must be a non-empty (n, R) array")
        if ious.shape != (points.shape[0],):
            raise ValueError("need exactly one IoU per reference point")
        if np.any(ious < 0.0) or np.any(ious > 1.0):
            raise ValueError("reference IoUs must lie in [0,1]")
        if not 1 <= self.k <= points.shape[0]:
            raise ValueError(f"k={self.k} out of range [1, {points.shape[0]}]")
        points.setflags(write=False)
        ious.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "ious", ious)


def fit_iou_predictor(points: np.ndarray, ious: np.ndarray, k: int = DEFAULT_KNN_K) -> IouPredictor:
    return IouPredictor(points=points, ious=ious, k=k)


def predict_iou(predictor: IouPredictor, v: np.ndarray) -> float:
    """Inverse-distance-weighted IoU of the k nearest references.

    At distance zero the weighting degenerates, so exact matches return the
    unweighted mean over all zero-distance neighbours instead.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (predictor.points.shape[1],):
        raise ValueError(
            f"query shape {v.shape} does not match reference dimension {predictor.points.shape[1]}"
        )
    dists = np.sqrt(((predictor.points - v) ** 2).sum(axis=1))
    order = np.argsort(dists, kind="stable")[: predictor.k]
    near = dists[order]
    vals = predictor.ious[order]
    zero = near == 0.0
    if zero.any():
        return float(vals[zero].mean())
    weights = 1.0 / near
    return float((weights * vals).sum() / weights.sum())


def predict_iou_batch(predictor: IouPredictor, x: np.ndarray) -> np.ndarray:
    """Vectorised ``predict_iou`` over the rows of an (m, R) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != predictor.points.shape[1]:
        raise ValueError("query matrix dimension does not match references")
    dists = np.sqrt(sq_dist_matrix(x, predictor.points))
    order = np.argsort(dists, axis=1, kind="stable")[:, : predictor.k]
    near = np.take_along_axis(dists, order, axis=1)
    vals = predictor.ious[order]
    zero = near == 0.0
    has_zero = zero.any(axis=1)
    with np.errstate(divide="ignore"):
        weights = 1.0 / near
    out = np.empty(x.shape[0])
    for i in np.flatnonzero(has_zero):
        out[i] = vals[i][zero[i]].mean()
    rest = ~has_zero
    if rest.any():
        out[rest] = (weights[rest] * vals[rest]).sum(axis=1) / weights[rest].sum(axis=1)
    return out


def save_predictor(predictor: IouPredictor, path) -> None:
    n, r = predictor.points.shape
    with open(path, "wb") as fh:
        fh.write(_IOP_MAGIC)
        fh.write(struct.pack("<III", n, r, predictor.k))
        fh.write(predictor.points.astype("<f4").tobytes())
        fh.write(predictor.ious.astype("<f4").tobytes())


def load_predictor(path) -> IouPredictor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _IOP_MAGIC:
        raise DataFormatError(f"{path}: not an IoU predictor file")
    n, r, k = struct.unpack_from("<III", blob, 4)
    expected = 16 + 4 * (n * r + n)
    if len(blob) != expected:
        raise DataFormatError(f"{path}: size mismatch, expected {expected} bytes, got {len(blob)}")
    points = np.frombuffer(blob, dtype="<f4", count=n * r, offset=16).astype(np.float64).reshape(n, r)
    ious = np.frombuffer(blob, dtype="<f4", count=n, offset=16 + 4 * n * r).astype(np.float64)
    # float32 storage may nudge values a hair past the bounds
    return IouPredictor(points=points, ious=np.clip(ious, 0.0, 1.0), k=k)
