"""End-to-end feature computation: reduce, predict, cluster, score.

The same staging serves the file-based CLI workflow and the synthetic
benchmark: fit the reduction and clustering on the reference corpus, then
derive per-sample features (normalised cluster distance, predicted IoU,
outlier probability, orphan/error membership) for the unlabelled pool and
evaluate both priority formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clustering, loop, metrics, pca
from .data import Corpus
from .scoring import Coefficients, SampleFeatures, SampleScore, score_all

PCA_FIT_POOLED = "pooled"
PCA_FIT_CORE = "core"


@dataclass(frozen=True)
class PipelineParams:
    """Tunable knobs for every stage; None means the stage's default rule."""

    pca_components: int | None = None
    pca_variance_threshold: float = pca.DEFAULT_VARIANCE_THRESHOLD
    pca_fit: str = PCA_FIT_POOLED
    knn_k: int = metrics.DEFAULT_KNN_K
    cluster_k: int | None = None
    error_cluster_k: int | None = None
    finetune_cluster_k: int | None = None
    iou_weight: float = 1.0
    loop_k_nn: int = loop.DEFAULT_LOOP_K
    loop_lambda: float = loop.DEFAULT_LOOP_LAMBDA
    loop_pool_core: bool = False
    coefficients: Coefficients = field(default_factory=Coefficients)

    def __post_init__(self) -> None:
        if self.pca_fit not in (PCA_FIT_POOLED, PCA_FIT_CORE):
            raise ValueError(f"pca_fit must be '{PCA_FIT_POOLED}' or '{PCA_FIT_CORE}'")


@dataclass(frozen=True)
class FittedModels:
    reduction: pca.PcaModel
    predictor: metrics.IouPredictor
    clusters: clustering.ClusterModel


def _subseeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def fit_models(core: Corpus, finetune: Corpus | None, params: PipelineParams, seed: int = 0) -> FittedModels:
    """Fit reduction + IoU predictor + clusters (core and error) on the reference corpus.

    The reduction is fitted on pooled core and fine-tuning vectors by
    default; ``params.pca_fit='core'`` restricts it to the reference corpus.
    """
    core_vectors = core.vectors()
    if params.pca_fit == PCA_FIT_POOLED and finetune is not None:
        fit_matrix = np.vstack([core_vectors, finetune.vectors()])
    else:
        fit_matrix = core_vectors
    reduction = pca.fit_pca(
        fit_matrix,
        r=params.pca_components,
        variance_threshold=params.pca_variance_threshold,
    )

    core_reduced = pca.transform_batch(reduction, core_vectors)
    core_ious = core.measured_ious()
    predictor = metrics.fit_iou_predictor(
        core_reduced, core_ious, k=min(params.knn_k, len(core))
    )

    seed_core, seed_err = _subseeds(seed, 2)
    clusters = clustering.fit_core_clusters(
        core_reduced,
        core_ious,
        k=params.cluster_k,
        iou_weight=params.iou_weight,
        seed=seed_core,
    )
    clusters = clustering.fit_error_clusters(
        clusters, core_reduced, core_ious, k_err=params.error_cluster_k, seed=seed_err
    )
    return FittedModels(reduction=reduction, predictor=predictor, clusters=clusters)


def score_finetune(
    models: FittedModels, finetune: Corpus, params: PipelineParams, seed: int = 0
) -> list[SampleScore]:
    """Compute every feature for the unlabelled pool and both priority scores."""
    if len(finetune) == 0:
        return []
    ft_reduced = pca.transform_batch(models.reduction, finetune.vectors())
    pred_ious = metrics.predict_iou_batch(models.predictor, ft_reduced)

    assignments = clustering.classify_batch(models.clusters, ft_reduced, pred_ious)
    assignments = clustering.normalize_distances(assignments)

    ft_points = models.clusters.augment(ft_reduced, pred_ious)
    (seed_ft,) = _subseeds(seed, 3)[2:]
    report = clustering.detect_orphans(
        models.clusters, ft_points, k_ft=params.finetune_cluster_k, seed=seed_ft
    )

    # outlier probabilities over the pool itself; optionally the reference
    # points join the density estimate
    if params.loop_pool_core:
        loop_points = np.vstack([ft_reduced, models.predictor.points])
    else:
        loop_points = ft_reduced
    k_nn = min(params.loop_k_nn, loop_points.shape[0] - 1)
    if k_nn >= 1:
        loop_model = loop.fit_loop(loop_points, k_nn=k_nn, lam=params.loop_lambda)
        outlier_scores = loop.loop_scores(loop_model)[: len(finetune)]
    else:
        outlier_scores = np.zeros(len(finetune))

    features = [
        SampleFeatures(
            id=rec.id,
            dist=assignments[i].norm_dist,
            pred_iou=float(np.clip(pred_ious[i], 0.0, 1.0)),
            loop=float(outlier_scores[i]),
            orph=float(report.orph_weight[i]),
            err=float(report.err_weight[i]),
        )
        for i, rec in enumerate(finetune.records)
    ]
    return score_all(features, params.coefficients)


def compute_scores(
    core: Corpus, finetune: Corpus, params: PipelineParams | None = None, seed: int = 0
) -> list[SampleScore]:
    """Full run over in-memory corpora; one master seed fixes every stage."""
    params = params or PipelineParams()
    models = fit_models(core, finetune, params, seed)
    return score_finetune(models, finetune, params, seed)
