"""Evaluation metrics: accuracy, hotspot heatmap quality, displacement errors."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .priors import resample_trajectory
from .types import AttentionVolume, HotspotMap, Trajectory

_EPS = 1e-12


def topk_accuracy(preds: np.ndarray, labels: Sequence[int], k: int = 1) -> float:
    """Fraction of samples whose label is among the k highest-scoring classes."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(preds) == 0 or len(preds) != len(labels):
        raise ValueError("empty input or length mismatch")
    if k < 1:
        raise ValueError("k must be >= 1")
    topk = np.argsort(-preds, axis=1)[:, :k]
    return float(np.mean([labels[i] in topk[i] for i in range(len(labels))]))


def mean_class_accuracy(preds: np.ndarray, labels: Sequence[int]) -> float:
    """Unweighted mean of per-class top-1 recalls over the classes present."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(preds) == 0 or len(preds) != len(labels):
        raise ValueError("empty input or length mismatch")
    pred_cls = preds.argmax(axis=1)
    recalls = []
    for c in np.unique(labels):
        mask = labels == c
        recalls.append(np.mean(pred_cls[mask] == c))
    return float(np.mean(recalls))


def _as_map(x) -> np.ndarray:
    if isinstance(x, HotspotMap):
        return x.probs
    return np.asarray(x)


def hotspot_prf(pred, gt, threshold_quantile: float = 0.75
                ) -> Tuple[float, float, float]:
    """Set precision/recall/F1 after per-map quantile binarization."""
    p = _as_map(pred)
    g = _as_map(gt)
    if p.shape != g.shape:
        raise ValueError(f"grid mismatch {p.shape} vs {g.shape}")
    p_bin = p > np.quantile(p, threshold_quantile)
    g_bin = g > np.quantile(g, threshold_quantile)
    tp = np.sum(p_bin & g_bin)
    precision = tp / p_bin.sum() if p_bin.sum() else 0.0
    recall = tp / g_bin.sum() if g_bin.sum() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return float(precision), float(recall), float(f1)


def heatmap_kld(pred, gt, direction: str = "gt_pred") -> float:
    """KL divergence between two heatmaps after renormalization.

    Default direction is KL(gt || pred), the saliency-benchmark convention;
    lower is better.
    """
    p = _as_map(pred).astype(np.float64)
    g = _as_map(gt).astype(np.float64)
    if p.shape != g.shape:
        raise ValueError(f"grid mismatch {p.shape} vs {g.shape}")
    p = np.clip(p, _EPS, None)
    g = np.clip(g, _EPS, None)
    p /= p.sum()
    g /= g.sum()
    if direction == "gt_pred":
        a, b = g, p
    elif direction == "pred_gt":
        a, b = p, g
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return float(np.sum(a * np.log(a / b)))


def point_displacement_errors(pred: Trajectory, gt: Trajectory) -> Tuple[float, float]:
    """ADE/FDE between two equal-length point trajectories."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or len(pred) == 0:
        raise ValueError("empty trajectory or length mismatch")
    dists = np.linalg.norm(pred - gt, axis=1)
    return float(dists.mean()), float(dists[-1])


def argmax_points(volume) -> np.ndarray:
    """Per-slice argmax cell centers in normalized [0,1]^2 coordinates.

    Ties break toward the smallest row-major index (numpy argmax order).
    """
    probs = volume.probs if isinstance(volume, AttentionVolume) else np.asarray(volume)
    T, H, W = probs.shape
    pts = np.empty((T, 2))
    for t in range(T):
        flat = int(np.argmax(probs[t]))
        iy, ix = divmod(flat, W)
        pts[t] = [(ix + 0.5) / W, (iy + 0.5) / H]
    return pts


def trajectory_errors(pred, gt: Trajectory) -> Tuple[float, float]:
    """Normalized ADE/FDE between per-slice argmax points and the ground truth.

    The ground-truth trajectory is resampled to the volume's temporal length
    with the same linear rule used when rendering trajectory priors.
    """
    probs = pred.probs if isinstance(pred, AttentionVolume) else np.asarray(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if gt.size == 0:
        raise ValueError("empty trajectory")
    pts = argmax_points(probs)
    ref = resample_trajectory(gt, len(pts))
    dists = np.linalg.norm(pts - ref, axis=1)
    return float(dists.mean()), float(dists[-1])
