"""Annotation-priority ranking of fine-tuning samples from latent embeddings."""

from .clustering import (
    Assignment,
    ClusterModel,
    OrphanCluster,
    OrphanReport,
    classify,
    classify_batch,
    detect_orphans,
    fit_core_clusters,
    fit_error_clusters,
    kmeans,
    normalize_distances,
)
from .data import (
    BinaryMask,
    Corpus,
    DataFormatError,
    EmbeddingRecord,
    load_embeddings,
    load_mask,
    save_embeddings,
)
from .harness import (
    SweepResult,
    export_scatter,
    report,
    run_budget_sweep,
    surrogate_quality,
)
from .metrics import IouPredictor, fit_iou_predictor, iou, predict_iou, predict_iou_batch
from .loop import LoopModel, fit_loop, loop_score, loop_scores
from .pca import PcaModel, explained_variance_ratio, fit_pca, transform, transform_batch
from .pipeline import PipelineParams, compute_scores, fit_models, score_finetune
from .scoring import (
    Coefficients,
    SampleFeatures,
    SampleScore,
    bps,
    mps,
    rank,
    score_all,
    select_budget,
)
from .synthetic import (
    CoreClusterSpec,
    GroundTruth,
    NovelClusterSpec,
    SyntheticSpec,
    default_spec,
    generate_synthetic,
)

__version__ = "0.1.0"
