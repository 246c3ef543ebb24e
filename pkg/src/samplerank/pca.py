"""Linear dimensionality reduction of activation vectors.

The reduction is a classical principal-component projection obtained from
the singular value decomposition of the centred data matrix, which yields
the same spectrum as an eigendecomposition of the covariance (or Gram)
matrix while handling both the N >= D and N < D regimes in one code path.
Component signs follow a fixed convention so refitting identical bytes
reproduces an identical model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Corpus, DataFormatError

_PCA_MAGIC = b"PCA1"

DEFAULT_VARIANCE_THRESHOLD = 0.95
DEFAULT_COMPONENT_CAP = 32


@dataclass(frozen=True)
class PcaModel:
    """Fitted reduction: mean, orthonormal components and their variances.

    ``total_variance`` is the trace of the fitted covariance, kept so
    explained-variance ratios stay correct when fewer than D components
    are retained (and after reload from disk).
    """

    mean: np.ndarray          # (D,)
    components: np.ndarray    # (R, D), rows orthonormal, variance-ordered
    eigenvalues: np.ndarray   # (R,), nonincreasing, >= 0
    total_variance: float

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        comp = np.asarray(self.components, dtype=np.float64)
        eig = np.asarray(self.eigenvalues, dtype=np.float64)
        if comp.ndim != 2 or mean.ndim != 1 or comp.shape[1] != mean.size:
            raise ValueError("components must be (R, D) with D matching mean")
        if eig.shape != (comp.shape[0],):
            raise ValueError("eigenvalues must have one entry per component")
        if np.any(eig < -1e-12) or np.any(np.diff(eig) > 1e-12):
            raise ValueError("eigenvalues must be nonnegative and nonincreasing")
        gram = comp @ comp.T
        if np.max(np.abs(gram - np.eye(comp.shape[0]))) > 1e-6:
            raise ValueError("component rows are not orthonormal within 1e-6")
        for arr in (mean, comp, eig):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "eigenvalues", np.maximum(eig, 0.0))

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def dimension(self) -> int:
        return self.components.shape[1]


def fit_pca(
    corpus: Corpus | np.ndarray,
    r: int | None = None,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    component_cap: int = DEFAULT_COMPONENT_CAP,
) -> PcaModel:
    """Fit a reduction on row vectors (a Corpus or an (N, D) array).

    With ``r=None`` the rank is the smallest one whose cumulative explained
    variance reaches *variance_threshold*, capped at *component_cap*.
    Raises on r outside [1, min(D, N)] and on zero total variance.
    """
    x = corpus.vectors() if isinstance(corpus, Corpus) else np.asarray(corpus, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected an (N, D) matrix of vectors")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 vectors to fit")
    max_r = min(d, n)
    if r is not None and not 1 <= r <= max_r:
        raise ValueError(f"r={r} out of range [1, {max_r}]")

    mean = x.mean(axis=0)
    centred = x - mean
    # economy SVD: vh still carries min(D, N) rows, the most r can be
    _, singulars, vh = np.linalg.svd(centred, full_matrices=False)
    eigenvalues = np.zeros(min(d, n))
    eigenvalues[: singulars.size] = singulars**2 / (n - 1)
    total_variance = float(eigenvalues.sum())
    if total_variance <= 0.0:
        raise ValueError("zero total variance: all vectors are identical")

    if r is None:
        ratios = np.cumsum(eigenvalues) / total_variance
        r = int(np.searchsorted(ratios, variance_threshold - 1e-12) + 1)
        r = min(r, component_cap, max_r)

    components = vh[:r].copy()
    # sign convention: the largest-magnitude entry of each component is positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        components=components,
        eigenvalues=eigenvalues[:r],
        total_variance=total_variance,
    )


def transform(model: PcaModel, v: np.ndarray) -> np.ndarray:
    """Project one D-vector onto the retained components."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.dimension,):
        raise ValueError(f"vector shape {v.shape} does not match dimension {model.dimension}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    return model.components @ (v - model.mean)


def transform_batch(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project an (N, D) matrix of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dimension:
        raise ValueError(f"matrix shape {x.shape} does not match dimension {model.dimension}")
    return (x - model.mean) @ model.components.T


def explained_variance_ratio(model: PcaModel) -> np.ndarray:
    """Per-component share of the fitted data's total variance."""
    return model.eigenvalues / model.total_variance


def save_pca(model: PcaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_PCA_MAGIC)
        fh.write(struct.pack("<II", model.dimension, model.n_components))
        fh.write(np.float32(model.total_variance).tobytes())
        fh.write(model.mean.astype("<f4").tobytes())
        fh.write(model.components.astype("<f4").tobytes())
        fh.write(model.eigenvalues.astype("<f4").tobytes())


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _PCA_MAGIC:
        raise DataFormatError(f"{path}: not a PCA model file")
    d, r = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * (1 + d + r * d + r)
    if len(blob) != expected:
        raise DataFormatError(f"{path}: size mismatch, expected {expected} bytes, got {len(blob)}")
    floats = np.frombuffer(blob, dtype="<f4", offset=12).astype(np.float64)
    total_variance = float(floats[0])
    mean = floats[1 : 1 + d]
    components = floats[1 + d : 1 + d + r * d].reshape(r, d)
    eigenvalues = np.maximum(floats[1 + d + r * d :], 0.0)
    return PcaModel(
        mean=mean, components=components, eigenvalues=eigenvalues, total_variance=total_variance
    )
