"""Priority formulas, ranking, and budget selection."""

import numpy as np
import pytest

from samplerank.scoring import (
    Coefficients,
    SampleFeatures,
    SampleScore,
    bps,
    mps,
    rank,
    score_all,
    select_budget,
    write_queue_csv,
)


class TestCoefficients:
    def test_defaults_are_valid(self):
        c = Coefficients()
        assert c.bps_a == 0.75 and c.mps_d == 0.05

    def test_bps_sum_enforced(self):
        with pytest.raises(ValueError, match="sum to 1"):
            Coefficients(bps_a=0.8, bps_b=0.25)

    def test_mps_sum_enforced(self):
        with pytest.raises(ValueError, match="sum to 1"):
            Coefficients(mps_a=0.5, mps_b=0.25, mps_c=0.2, mps_d=0.1)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            Coefficients(bps_a=1.25, bps_b=-0.25)


class TestBasicScore:
    def test_maximum_case(self):
        assert bps(1.0, 0.0) == 1.0

    def test_minimum_case(self):
        assert bps(0.0, 1.0) == 0.0

    def test_hand_value_with_default_coefficients(self):
        assert bps(0.4, 0.8) == pytest.approx(0.35)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            bps(1.2, 0.5)
        with pytest.raises(ValueError, match="outside"):
            bps(0.5, -0.1)


class TestMultipartyScore:
    def test_full_outlier_suppression(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            orph, err, dist, pred = rng.uniform(size=4)
            assert mps(orph, err, dist, pred, loop=1.0) == 0.0

    def test_hand_value_with_default_coefficients(self):
        assert mps(1.0, 0.0, 1.0, 0.0, 0.0) == pytest.approx(0.75)

    def test_only_iou_term_fires_on_zero_features(self):
        assert mps(0.0, 0.0, 0.0, 0.0, 0.0) == pytest.approx(0.05)

    def test_range_over_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            orph, err, dist, pred, lp = rng.uniform(size=5)
            value = mps(orph, err, dist, pred, lp)
            basic = bps(dist, pred)
            assert 0.0 <= value <= 1.0 and 0.0 <= basic <= 1.0

    def test_monotonicity_by_pairwise_perturbation(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            orph, err, dist, pred, lp = rng.uniform(0.05, 0.95, size=5)
            eps = 0.04
            base_b = bps(dist, pred)
            base_m = mps(orph, err, dist, pred, lp)
            assert bps(dist + eps, pred) >= base_b
            assert bps(dist, pred + eps) <= base_b
            assert mps(orph + eps, err, dist, pred, lp) >= base_m
            assert mps(orph, err + eps, dist, pred, lp) >= base_m
            assert mps(orph, err, dist + eps, pred, lp) >= base_m
            assert mps(orph, err, dist, pred + eps, lp) <= base_m
            assert mps(orph, err, dist, pred, lp + eps) <= base_m


class TestScoreAll:
    def test_empty_input(self):
        assert score_all([]) == []

    def test_single_sample_is_recomputable(self):
        feats = [SampleFeatures(id=3, dist=0.2, pred_iou=0.6, loop=0.1, orph=0.5, err=0.0)]
        (s,) = score_all(feats)
        assert s.bps == bps(0.2, 0.6)
        assert s.mps == mps(0.5, 0.0, 0.2, 0.6, 0.1)

    def test_bps_ordering_follows_dist_when_other_features_equal(self):
        feats = [
            SampleFeatures(id=i, dist=d, pred_iou=0.5, loop=0.0, orph=0.0, err=0.0)
            for i, d in enumerate([0.1, 0.9, 0.5])
        ]
        scores = score_all(feats)
        assert rank(scores, "bps") == [1, 2, 0]

    def test_missing_feature_rejected(self):
        with pytest.raises(ValueError, match="missing feature"):
            SampleFeatures(id=0, dist=None, pred_iou=0.5, loop=0.0, orph=0.0, err=0.0)


def _scores(values: dict[int, float]) -> list[SampleScore]:
    return [
        SampleScore(id=i, dist=0, pred_iou=1, loop=0, orph=0, err=0, bps=v, mps=v / 2)
        for i, v in values.items()
    ]


class TestRank:
    def test_ties_break_by_ascending_id(self):
        assert rank(_scores({1: 0.9, 2: 0.9, 3: 0.1}), "bps") == [1, 2, 3]

    def test_increasing_scores_reverse_id_order(self):
        assert rank(_scores({0: 0.1, 1: 0.2, 2: 0.3}), "bps") == [2, 1, 0]

    def test_input_permutation_irrelevant(self):
        scores = _scores({i: float(v) for i, v in enumerate([0.3, 0.9, 0.1, 0.5])})
        shuffled = [scores[2], scores[0], scores[3], scores[1]]
        assert rank(scores, "bps") == rank(shuffled, "bps")

    def test_strictly_increasing_transform_preserves_ranking(self):
        rng = np.random.default_rng(3)
        values = {i: float(v) for i, v in enumerate(rng.uniform(size=20))}
        base = rank(_scores(values), "bps")
        squashed = rank(_scores({i: v**3 * 0.9 for i, v in values.items()}), "bps")
        assert base == squashed

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            rank(_scores({0: 0.5}), "entropy")

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            rank([], "bps")


class TestSelectBudget:
    def test_full_list(self):
        ranked = [5, 3, 1]
        assert select_budget(ranked, 3) == ranked

    def test_top_one(self):
        assert select_budget([5, 3, 1], 1) == [5]

    def test_prefixes_nest(self):
        rng = np.random.default_rng(4)
        ranked = rng.permutation(2200).tolist()
        for n in (250, 251, 1000):
            assert select_budget(ranked, n) == select_budget(ranked, n + 1)[:-1]

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            select_budget([1, 2], 3)
        with pytest.raises(ValueError, match="out of range"):
            select_budget([1, 2], 0)


class TestQueueCsv:
    def test_layout_and_determinism(self, tmp_path):
        rng = np.random.default_rng(5)
        feats = [
            SampleFeatures(
                id=i,
                dist=float(rng.uniform()),
                pred_iou=float(rng.uniform()),
                loop=float(rng.uniform()),
                orph=float(rng.uniform()),
                err=float(rng.uniform()),
            )
            for i in range(10)
        ]
        scores = score_all(feats)
        write_queue_csv(scores, "bps", tmp_path / "a.csv")
        write_queue_csv(scores, "bps", tmp_path / "b.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "rank,id,score,dist,pred_iou,loop,orph,err"
        assert len(lines) == 11
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        ranks = [int(line.split(",")[0]) for line in lines[1:]]
        assert ranks == list(range(1, 11))
        emitted = [float(line.split(",")[2]) for line in lines[1:]]
        assert emitted == sorted(emitted, reverse=True)
