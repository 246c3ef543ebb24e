"""Seeded synthetic latent-space generator for the benchmark harness.

The generator shapes the same regimes the ranking engine is built for: a
reference corpus drawn from a handful of Gaussian modes (two dominant,
mirroring the bipolar undeveloped-vs-urbanised structure of segmentation
latents) with per-mode IoU levels, and a fine-tuning pool consisting of

* a base population drawn from the reference modes under a separate mix
  (a new region rarely matches the training distribution),
* novel clusters planted far outside every reference mode, and
* a small fraction of isolated outliers scattered across a huge box.

Hidden bookkeeping (mode of origin, novelty, outlierness) is returned
separately from the corpora so the scoring pipeline can never see it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus, EmbeddingRecord, SPLIT_CORE, SPLIT_FINETUNE

OUTLIER_HIDDEN_ID = -1

_NOVEL_CLEARANCE_SIGMAS = 10.0
_OUTLIER_BOX_SPANS = 20.0


@dataclass(frozen=True)
class CoreClusterSpec:
    """One reference mode: location, spread, IoU regime, and sampling shares."""

    center: tuple[float, ...]
    stddev: float = 1.0
    iou_mean: float = 0.75
    iou_stddev: float = 0.05
    weight: float = 0.25           # share of the reference corpus
    finetune_weight: float = 0.0   # share of the fine-tuning base pool


@dataclass(frozen=True)
class NovelClusterSpec:
    size: int
    stddev: float = 3.0


@dataclass(frozen=True)
class SyntheticSpec:
    dims: int = 8
    core_clusters: tuple[CoreClusterSpec, ...] = ()
    novel_clusters: tuple[NovelClusterSpec, ...] = ()
    outlier_fraction: float = 0.02
    core_n: int = 2000
    ft_n: int = 2200
    seed: int = 42
    novel_distance: float = 13.0
    novel_separation: float = 3.0
    truncate_sigma: float = 4.5

    def __post_init__(self) -> None:
        if self.dims < 1:
            raise ValueError("dims must be positive")
        if self.core_n < 1 or self.ft_n < 1:
            raise ValueError("sample counts must be positive")
        if not 0.0 <= self.outlier_fraction <= 0.2:
            raise ValueError("outlier_fraction must lie in [0, 0.2]")
        if not self.core_clusters:
            raise ValueError("need at least one core cluster")
        for c in self.core_clusters:
            if len(c.center) != self.dims:
                raise ValueError("core cluster center dimension does not match dims")
            if c.stddev <= 0 or c.iou_stddev < 0 or c.weight < 0 or c.finetune_weight < 0:
                raise ValueError("invalid core cluster parameters")
            if not 0.0 <= c.iou_mean <= 1.0:
                raise ValueError("iou_mean must lie in [0,1]")
        for nv in self.novel_clusters:
            if nv.size < 1 or nv.stddev <= 0:
                raise ValueError("invalid novel cluster parameters")
        if sum(c.weight for c in self.core_clusters) <= 0:
            raise ValueError("core cluster weights must not all be zero")

    @property
    def n_outliers(self) -> int:
        return int(round(self.outlier_fraction * self.ft_n))

    @property
    def novel_total(self) -> int:
        return sum(nv.size for nv in self.novel_clusters)

    @property
    def ft_base_n(self) -> int:
        return self.ft_n - self.novel_total - self.n_outliers


def default_spec(seed: int = 42, dims: int = 8) -> SyntheticSpec:
    """The desk-scale benchmark: bipolar reference corpus, regime-shifted pool.

    The fine-tuning base pool is drawn from the high-IoU dominant mode only;
    the undeveloped (low-IoU) mode supplies the error-cluster population on
    the reference side. Novel clusters sit off the mode axes, diffuse enough
    that sparse random labelling covers them poorly.
    """
    if dims < 2:
        raise ValueError("default geometry needs dims >= 2")

    def axis(i: int, value: float) -> tuple[float, ...]:
        center = [0.0] * dims
        center[i] = value
        return tuple(center)

    return SyntheticSpec(
        dims=dims,
        core_clusters=(
            CoreClusterSpec(center=axis(0, 4.0), stddev=1.0, iou_mean=0.80,
                            iou_stddev=0.04, weight=0.40, finetune_weight=1.0),
            CoreClusterSpec(center=axis(0, -4.0), stddev=1.0, iou_mean=0.55,
                            iou_stddev=0.06, weight=0.40),
            CoreClusterSpec(center=axis(1, 4.0), stddev=1.0, iou_mean=0.72,
                            iou_stddev=0.04, weight=0.10),
            CoreClusterSpec(center=axis(1, -4.0), stddev=1.0, iou_mean=0.68,
                            iou_stddev=0.04, weight=0.10),
        ),
        novel_clusters=(NovelClusterSpec(size=60), NovelClusterSpec(size=140)),
        outlier_fraction=0.02,
        core_n=2000,
        ft_n=2200,
        seed=seed,
    )


@dataclass(frozen=True)
class GroundTruth:
    """Generator bookkeeping for the fine-tuning pool, hidden from the pipeline."""

    hidden_cluster_id: np.ndarray  # (ft_n,) int; OUTLIER_HIDDEN_ID for outliers
    is_novel: np.ndarray           # (ft_n,) bool
    is_outlier: np.ndarray         # (ft_n,) bool

    def __post_init__(self) -> None:
        for name, dtype in (("hidden_cluster_id", np.int64), ("is_novel", bool), ("is_outlier", bool)):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to weights, exact and deterministic."""
    weights = weights / weights.sum()
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.lexsort((np.arange(weights.size), -(raw - counts)))
        counts[order[:short]] += 1
    return counts


def _truncated_gaussian(rng: np.random.Generator, n: int, dims: int, limit: float) -> np.ndarray:
    """Standard normal rows re-drawn until their radius is within *limit*."""
    out = rng.standard_normal((n, dims))
    while True:
        bad = np.flatnonzero((out**2).sum(axis=1) > limit**2)
        if bad.size == 0:
            return out
        out[bad] = rng.standard_normal((bad.size, dims))


def _place_novel_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Novel centers near one seeded anchor direction, clear of every core mode.

    The clusters form one novel neighbourhood (separated by
    ``novel_separation`` around an anchor at ``novel_distance``), the way
    genuinely new content tends to occupy its own region of latent space
    rather than scatter; every center keeps the required clearance from
    every core mode.
    """
    core_centers = np.array([c.center for c in spec.core_clusters])
    clearance = np.array([_NOVEL_CLEARANCE_SIGMAS * c.stddev for c in spec.core_clusters])

    def clear_of_core(candidate: np.ndarray) -> bool:
        gaps = np.sqrt(((core_centers - candidate) ** 2).sum(axis=1))
        return bool(np.all(gaps >= clearance))

    def unit(v: np.ndarray) -> np.ndarray:
        return v / np.sqrt((v**2).sum())

    centers: list[np.ndarray] = []
    for j, _ in enumerate(spec.novel_clusters):
        for _attempt in range(1000):
            if j == 0:
                candidate = spec.novel_distance * unit(rng.standard_normal(spec.dims))
            else:
                candidate = centers[j - 1] + spec.novel_separation * unit(
                    rng.standard_normal(spec.dims)
                )
            if clear_of_core(candidate):
                centers.append(candidate)
                break
        else:
            raise ValueError(
                "could not place novel clusters clear of core modes; "
                "increase novel_distance or reduce cluster count"
            )
    return np.array(centers) if centers else np.zeros((0, spec.dims))


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, Corpus, GroundTruth]:
    """Draw (reference corpus, fine-tuning corpus, hidden truth) from one seed."""
    if spec.ft_base_n < 0:
        raise ValueError(
            f"infeasible spec: novel sizes ({spec.novel_total}) plus outliers "
            f"({spec.n_outliers}) exceed ft_n ({spec.ft_n})"
        )
    ft_weights = np.array([c.finetune_weight for c in spec.core_clusters])
    if spec.ft_base_n > 0 and ft_weights.sum() <= 0:
        raise ValueError("infeasible spec: fine-tuning base pool needs a positive mode weight")

    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    centers = np.array([c.center for c in spec.core_clusters])

    # reference corpus
    core_counts = _largest_remainder(np.array([c.weight for c in spec.core_clusters]), spec.core_n)
    core_vectors, core_ious = [], []
    for cluster, count in zip(spec.core_clusters, core_counts):
        z = _truncated_gaussian(rng, count, dims, spec.truncate_sigma)
        core_vectors.append(np.asarray(cluster.center) + cluster.stddev * z)
        core_ious.append(
            np.clip(rng.normal(cluster.iou_mean, cluster.iou_stddev, count), 0.0, 1.0)
        )
    core_matrix = np.vstack(core_vectors)
    core_iou_values = np.concatenate(core_ious)

    # fine-tuning base pool, drawn from the reference modes under their own mix
    if spec.ft_base_n > 0:
        base_counts = _largest_remainder(ft_weights, spec.ft_base_n)
    else:
        base_counts = np.zeros(len(spec.core_clusters), dtype=int)
    base_vectors, base_ids = [], []
    for idx, (cluster, count) in enumerate(zip(spec.core_clusters, base_counts)):
        if count == 0:
            continue
        z = _truncated_gaussian(rng, count, dims, spec.truncate_sigma)
        base_vectors.append(np.asarray(cluster.center) + cluster.stddev * z)
        base_ids.append(np.full(count, idx))

    # novel clusters, clear of every reference mode
    novel_centers = _place_novel_centers(spec, rng)
    novel_vectors, novel_ids = [], []
    for j, nv in enumerate(spec.novel_clusters):
        z = _truncated_gaussian(rng, nv.size, dims, spec.truncate_sigma)
        novel_vectors.append(novel_centers[j] + nv.stddev * z)
        novel_ids.append(np.full(nv.size, len(spec.core_clusters) + j))

    structured = [core_matrix] + base_vectors + novel_vectors
    structured_matrix = np.vstack(structured)
    span = structured_matrix.max(axis=0) - structured_matrix.min(axis=0)
    mid = (structured_matrix.max(axis=0) + structured_matrix.min(axis=0)) / 2.0
    half_width = (_OUTLIER_BOX_SPANS / 2.0) * span.max()
    outlier_vectors = rng.uniform(mid - half_width, mid + half_width, (spec.n_outliers, dims))

    n_base = sum(len(v) for v in base_vectors)
    ft_matrix = np.vstack(base_vectors + novel_vectors + [outlier_vectors.reshape(-1, dims)])
    hidden = np.concatenate(
        base_ids + novel_ids + [np.full(spec.n_outliers, OUTLIER_HIDDEN_ID)]
    ).astype(np.int64)
    novel_flags = np.concatenate(
        [np.zeros(n_base, dtype=bool)]
        + [np.ones(nv.size, dtype=bool) for nv in spec.novel_clusters]
        + [np.zeros(spec.n_outliers, dtype=bool)]
    )
    outlier_flags = np.concatenate(
        [np.zeros(n_base + spec.novel_total, dtype=bool), np.ones(spec.n_outliers, dtype=bool)]
    )

    order = rng.permutation(ft_matrix.shape[0])
    ft_matrix = ft_matrix[order]
    truth = GroundTruth(
        hidden_cluster_id=hidden[order],
        is_novel=novel_flags[order],
        is_outlier=outlier_flags[order],
    )

    core_records = tuple(
        EmbeddingRecord(
            id=i, split=SPLIT_CORE, vector=core_matrix[i], measured_iou=float(core_iou_values[i])
        )
        for i in range(spec.core_n)
    )
    ft_records = tuple(
        EmbeddingRecord(id=spec.core_n + i, split=SPLIT_FINETUNE, vector=ft_matrix[i])
        for i in range(spec.ft_n)
    )
    return Corpus(core_records), Corpus(ft_records), truth
