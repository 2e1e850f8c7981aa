import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_distribution
from motor_anticipate import metrics
from motor_anticipate.types import AttentionVolume, HotspotMap


class TestTopK:
    def test_perfect_predictions(self):
        preds = np.eye(4)
        assert metrics.topk_accuracy(preds, [0, 1, 2, 3], 1) == 1.0

    def test_hand_built(self):
        preds = np.array([[0.5, 0.3, 0.2],
                          [0.1, 0.2, 0.7],
                          [0.4, 0.35, 0.25]])
        labels = [0, 0, 1]
        assert metrics.topk_accuracy(preds, labels, 1) == pytest.approx(1 / 3)
        assert metrics.topk_accuracy(preds, labels, 2) == pytest.approx(2 / 3)
        assert metrics.topk_accuracy(preds, labels, 3) == 1.0

    def test_k_larger_than_classes(self):
        preds = np.array([[0.9, 0.1]])
        assert metrics.topk_accuracy(preds, [1], 5) == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            metrics.topk_accuracy(np.empty((0, 3)), [])
        with pytest.raises(ValueError):
            metrics.topk_accuracy(np.eye(3), [0, 1])
        with pytest.raises(ValueError):
            metrics.topk_accuracy(np.eye(3), [0, 1, 2], k=0)


class TestMeanClassAccuracy:
    def test_balanced_equals_top1(self):
        preds = np.eye(3)
        labels = [0, 1, 2]
        assert metrics.mean_class_accuracy(preds, labels) == \
            metrics.topk_accuracy(preds, labels, 1)

    def test_imbalanced_hand_computed(self):
        # class 0: 3 samples, 2 right; class 1: 1 sample, 0 right
        preds = np.array([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.9, 0.1]])
        labels = [0, 0, 0, 1]
        assert metrics.mean_class_accuracy(preds, labels) == \
            pytest.approx(0.5 * (2 / 3 + 0.0))

    def test_only_classes_present(self):
        preds = np.array([[0.2, 0.3, 0.5], [0.1, 0.1, 0.8]])
        assert metrics.mean_class_accuracy(preds, [2, 2]) == 1.0


def _brute_prf(pred, gt, q):
    p_bin = pred > np.quantile(pred, q)
    g_bin = gt > np.quantile(gt, q)
    tp = int(np.sum(p_bin & g_bin))
    fp = int(np.sum(p_bin & ~g_bin))
    fn = int(np.sum(~p_bin & g_bin))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


class TestHotspotPRF:
    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            pred = random_distribution(rng, (4, 4))
            gt = random_distribution(rng, (4, 4))
            got = metrics.hotspot_prf(pred, gt)
            want = _brute_prf(pred, gt, 0.75)
            assert got == want

    def test_identical_maps_perfect(self):
        rng = np.random.default_rng(1)
        p = random_distribution(rng, (4, 4))
        assert metrics.hotspot_prf(p, p.copy()) == (1.0, 1.0, 1.0)

    def test_disjoint_maps_zero(self):
        pred = np.zeros((4, 4))
        pred[0, 0] = 1.0
        gt = np.zeros((4, 4))
        gt[3, 3] = 1.0
        assert metrics.hotspot_prf(pred, gt) == (0.0, 0.0, 0.0)

    def test_accepts_hotspot_map(self):
        rng = np.random.default_rng(2)
        p = random_distribution(rng, (4, 4))
        got = metrics.hotspot_prf(HotspotMap(probs=p), HotspotMap(probs=p.copy()))
        assert got == (1.0, 1.0, 1.0)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid mismatch"):
            metrics.hotspot_prf(np.ones((4, 4)), np.ones((8, 8)))


class TestHeatmapKLD:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            pred = random_distribution(rng, (4, 4))
            gt = random_distribution(rng, (4, 4))
            want = sum(gt[i, j] * np.log(gt[i, j] / pred[i, j])
                       for i, j in itertools.product(range(4), range(4)))
            assert metrics.heatmap_kld(pred, gt) == pytest.approx(want, abs=1e-12)

    def test_identical_zero(self):
        rng = np.random.default_rng(4)
        p = random_distribution(rng, (4, 4))
        assert metrics.heatmap_kld(p, p.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_direction_argument(self):
        rng = np.random.default_rng(5)
        pred = random_distribution(rng, (4, 4))
        gt = random_distribution(rng, (4, 4))
        a = metrics.heatmap_kld(pred, gt, direction="gt_pred")
        b = metrics.heatmap_kld(pred, gt, direction="pred_gt")
        assert a != b
        with pytest.raises(ValueError, match="unknown direction"):
            metrics.heatmap_kld(pred, gt, direction="both")

    def test_renormalizes_inputs(self):
        rng = np.random.default_rng(6)
        p = random_distribution(rng, (4, 4))
        g = random_distribution(rng, (4, 4))
        assert metrics.heatmap_kld(3.0 * p, 7.0 * g) == \
            pytest.approx(metrics.heatmap_kld(p, g), abs=1e-12)


class TestDisplacement:
    def test_closed_form(self):
        pred = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        gt = np.array([[0.0, 1.0], [1.0, 2.0], [4.0, 5.0]])
        ade, fde = metrics.point_displacement_errors(pred, gt)
        assert ade == pytest.approx((1.0 + 2.0 + 5.0) / 3, abs=1e-9)
        assert fde == pytest.approx(5.0, abs=1e-9)

    def test_identical_zero(self):
        p = np.random.default_rng(7).random((5, 2))
        assert metrics.point_displacement_errors(p, p.copy()) == (0.0, 0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            metrics.point_displacement_errors(np.empty((0, 2)), np.empty((0, 2)))
        with pytest.raises(ValueError):
            metrics.point_displacement_errors(np.zeros((3, 2)), np.zeros((4, 2)))


class TestArgmaxPoints:
    def test_known_cells(self):
        vol = np.zeros((2, 4, 4))
        vol[0, 1, 2] = 1.0
        vol[1, 3, 0] = 1.0
        pts = metrics.argmax_points(vol)
        np.testing.assert_allclose(pts[0], [(2 + 0.5) / 4, (1 + 0.5) / 4])
        np.testing.assert_allclose(pts[1], [(0 + 0.5) / 4, (3 + 0.5) / 4])

    def test_tie_breaks_row_major(self):
        vol = np.full((1, 3, 3), 1 / 9)
        pts = metrics.argmax_points(vol)
        np.testing.assert_allclose(pts[0], [0.5 / 3, 0.5 / 3])

    def test_accepts_attention_volume(self):
        vol = np.zeros((1, 2, 2))
        vol[0, 0, 1] = 1.0
        out = metrics.argmax_points(AttentionVolume(psi=vol, probs=vol))
        np.testing.assert_allclose(out[0], [0.75, 0.25])


class TestTrajectoryErrors:
    def test_peaked_volume_matches_point_errors(self):
        # volume peaked at known cells reduces to plain ADE/FDE between cell
        # centers and the resampled ground truth
        from motor_anticipate.priors import resample_trajectory
        vol = np.zeros((2, 4, 4))
        vol[0, 0, 0] = 1.0
        vol[1, 3, 3] = 1.0
        gt = np.array([[0.0, 0.0], [1.0, 1.0]])
        ade, fde = metrics.trajectory_errors(vol, gt)
        pts = metrics.argmax_points(vol)
        ref = resample_trajectory(gt, 2)
        want = np.linalg.norm(pts - ref, axis=1)
        assert ade == pytest.approx(want.mean(), abs=1e-12)
        assert fde == pytest.approx(want[-1], abs=1e-12)

    def test_empty_gt(self):
        with pytest.raises(ValueError, match="empty"):
            metrics.trajectory_errors(np.ones((2, 4, 4)) / 16, np.empty((0, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_prf_symmetry_under_swap(seed):
    # swapping pred and gt swaps precision and recall
    rng = np.random.default_rng(seed)
    pred = random_distribution(rng, (4, 4))
    gt = random_distribution(rng, (4, 4))
    p1, r1, f1 = metrics.hotspot_prf(pred, gt)
    p2, r2, f2 = metrics.hotspot_prf(gt, pred)
    assert p1 == pytest.approx(r2) and r1 == pytest.approx(p2)
    assert f1 == pytest.approx(f2)
