"""End-to-end feature computation over in-memory corpora."""

from dataclasses import replace

import numpy as np
import pytest

from samplerank import clustering, metrics, pca
from samplerank.pipeline import FittedModels, PipelineParams, compute_scores, fit_models, score_finetune
from samplerank.synthetic import NovelClusterSpec, default_spec, generate_synthetic


@pytest.fixture(scope="module")
def small_data():
    spec = replace(default_spec(seed=21), core_n=300, ft_n=360,
                   novel_clusters=(NovelClusterSpec(size=25), NovelClusterSpec(size=45)))
    return generate_synthetic(spec)


class TestComputeScores:
    def test_deterministic_under_seed(self, small_data):
        core, ft, _ = small_data
        a = compute_scores(core, ft, seed=5)
        b = compute_scores(core, ft, seed=5)
        assert a == b

    def test_one_score_per_pool_sample(self, small_data):
        core, ft, _ = small_data
        scores = compute_scores(core, ft, seed=5)
        assert [s.id for s in scores] == ft.ids

    def test_all_features_in_unit_interval(self, small_data):
        core, ft, _ = small_data
        for s in compute_scores(core, ft, seed=5):
            for name in ("dist", "pred_iou", "loop", "orph", "err", "bps", "mps"):
                value = getattr(s, name)
                assert 0.0 <= value <= 1.0, f"{name}={value} for id {s.id}"

    def test_outliers_get_high_loop_and_max_dist(self, small_data):
        core, ft, truth = small_data
        scores = compute_scores(core, ft, seed=5)
        outlier_scores = [s for s, o in zip(scores, truth.is_outlier) if o]
        assert outlier_scores, "fixture should contain outliers"
        assert np.mean([s.loop for s in outlier_scores]) > 0.8
        assert max(s.dist for s in scores) == 1.0

    def test_novel_samples_receive_orphan_weight(self, small_data):
        core, ft, truth = small_data
        scores = compute_scores(core, ft, seed=5)
        novel = [s.orph for s, n in zip(scores, truth.is_novel) if n]
        base = [s.orph for s, n, o in zip(scores, truth.is_novel, truth.is_outlier)
                if not n and not o]
        assert np.mean(novel) > 0.5
        assert np.mean(base) < 0.05

    def test_core_only_pca_fit_option(self, small_data):
        core, ft, _ = small_data
        pooled = fit_models(core, ft, PipelineParams(), seed=5)
        core_only = fit_models(core, ft, PipelineParams(pca_fit="core"), seed=5)
        assert not np.array_equal(pooled.reduction.mean, core_only.reduction.mean)

    def test_pooled_loop_option_changes_scores_but_keeps_ranges(self, small_data):
        core, ft, truth = small_data
        plain = compute_scores(core, ft, PipelineParams(), seed=5)
        pooled = compute_scores(core, ft, PipelineParams(loop_pool_core=True), seed=5)
        assert [s.id for s in pooled] == [s.id for s in plain]
        assert any(a.loop != b.loop for a, b in zip(plain, pooled))
        assert all(0.0 <= s.loop <= 1.0 for s in pooled)
        # outliers stay outliers no matter which population anchors the density
        pooled_outliers = [s.loop for s, o in zip(pooled, truth.is_outlier) if o]
        assert np.mean(pooled_outliers) > 0.8

    def test_empty_pool_gives_empty_scores(self, small_data):
        core, ft, _ = small_data
        models = fit_models(core, None, PipelineParams(pca_fit="core"), seed=5)
        from samplerank.data import Corpus

        assert score_finetune(models, Corpus((), dimension=core.dimension), PipelineParams()) == []


class TestModelPersistencePath:
    def test_scores_survive_the_save_load_cycle(self, small_data, tmp_path):
        core, ft, _ = small_data
        params = PipelineParams()
        models = fit_models(core, ft, params, seed=9)
        direct = score_finetune(models, ft, params, seed=9)

        pca.save_pca(models.reduction, tmp_path / "pca.bin")
        clustering.save_clusters(models.clusters, tmp_path / "clu.bin")
        metrics.save_predictor(models.predictor, tmp_path / "iou.bin")
        reloaded = FittedModels(
            reduction=pca.load_pca(tmp_path / "pca.bin"),
            predictor=metrics.load_predictor(tmp_path / "iou.bin"),
            clusters=clustering.load_clusters(tmp_path / "clu.bin"),
        )
        loaded = score_finetune(reloaded, ft, params, seed=9)
        # float32 storage perturbs features slightly, never structurally
        for a, b in zip(direct, loaded):
            assert a.id == b.id
            assert abs(a.bps - b.bps) < 1e-3
            assert abs(a.mps - b.mps) < 1e-3
