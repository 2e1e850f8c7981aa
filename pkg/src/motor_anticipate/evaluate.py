"""Split-level evaluation harness producing the full metrics report."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np
import torch

from . import metrics, priors
from .baselines import (TrajectoryLSTM, center_prior, gpr_forecast,
                        kalman_forecast, lstm_forecast, train_lstm_baseline)
from .model import InteractionModel
from .training import ClipDataset

REPORT_KEYS = ("top1", "top5", "mean_class", "precision", "recall", "f1",
               "kld", "ade", "fde")


@torch.no_grad()
def evaluate_model(model: InteractionModel, dataset: ClipDataset,
                   batch_size: int = 32, threshold_quantile: float = 0.75,
                   prior_sigma: float = 1.0) -> Dict[str, float]:
    """Deterministic-path predictions scored with all nine metrics."""
    model.eval()
    n = len(dataset)
    preds = np.empty((n, model.config.num_actions))
    prf = np.zeros(3)
    kld = 0.0
    ade = 0.0
    fde = 0.0
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        frames, _, _, _ = dataset.batch(idx)
        out = model(frames, sample=False)
        preds[idx] = out["action"].numpy()
        for j, i in enumerate(idx):
            clip = dataset.clips[i]
            hotspot = out["hotspot"][j].numpy()
            gt_map = priors.render_point_prior(
                clip.hotspot_point, hotspot.shape, prior_sigma).probs
            prf += metrics.hotspot_prf(hotspot, gt_map, threshold_quantile)
            kld += metrics.heatmap_kld(hotspot, gt_map)
            a, f = metrics.trajectory_errors(out["motor"][j].numpy(),
                                             clip.future_trajectory)
            ade += a
            fde += f
    labels = dataset.labels
    k5 = min(5, model.config.num_actions)
    return {
        "top1": metrics.topk_accuracy(preds, labels, 1),
        "top5": metrics.topk_accuracy(preds, labels, k5),
        "mean_class": metrics.mean_class_accuracy(preds, labels),
        "precision": prf[0] / n,
        "recall": prf[1] / n,
        "f1": prf[2] / n,
        "kld": kld / n,
        "ade": ade / n,
        "fde": fde / n,
        "threshold_quantile": threshold_quantile,
    }


def path_curvature(observed: np.ndarray, future: np.ndarray) -> float:
    """Max deviation of the full hand path from the straight start-end chord."""
    pts = np.concatenate([observed, future], axis=0)
    a, b = pts[0], pts[-1]
    chord = b - a
    norm = np.linalg.norm(chord)
    if norm < 1e-9:
        return 0.0
    rel = pts - a
    cross = np.abs(rel[:, 0] * chord[1] - rel[:, 1] * chord[0]) / norm
    return float(cross.max())


def evaluate_baselines(dataset: ClipDataset, lstm_model: Optional[TrajectoryLSTM] = None,
                       curvature_threshold: float = 0.0,
                       prior_sigma: float = 1.0,
                       threshold_quantile: float = 0.75,
                       hotspot_grid=(8, 8),
                       max_clips: Optional[int] = None) -> Dict[str, dict]:
    """ADE/FDE rows for the trajectory baselines plus the center-prior row.

    Clips with path curvature below ``curvature_threshold`` are skipped, which
    selects the curved-trajectory split when a positive threshold is given.
    """
    sums = {"kalman": np.zeros(2), "gpr": np.zeros(2), "lstm": np.zeros(2)}
    center_stats = np.zeros(4)
    count = 0
    for clip in dataset.clips:
        if clip.observed_trajectory is None:
            continue  # hand not observed: baselines are not applicable
        if path_curvature(clip.observed_trajectory,
                          clip.future_trajectory) < curvature_threshold:
            continue
        obs, fut = clip.observed_trajectory, clip.future_trajectory
        n_future = len(fut)
        sums["kalman"] += metrics.point_displacement_errors(
            kalman_forecast(obs, n_future), fut)
        sums["gpr"] += metrics.point_displacement_errors(
            gpr_forecast(obs, n_future), fut)
        if lstm_model is not None:
            sums["lstm"] += metrics.point_displacement_errors(
                lstm_forecast(obs, n_future, lstm_model), fut)
        cp = center_prior(hotspot_grid, sigma=1.0)
        gt_map = priors.render_point_prior(clip.hotspot_point, hotspot_grid,
                                           prior_sigma).probs
        center_stats[:3] += metrics.hotspot_prf(cp.probs, gt_map, threshold_quantile)
        center_stats[3] += metrics.heatmap_kld(cp.probs, gt_map)
        count += 1
        if max_clips is not None and count >= max_clips:
            break
    if count == 0:
        raise ValueError("no clips selected for baseline evaluation")
    report = {
        "kalman": {"ade": sums["kalman"][0] / count, "fde": sums["kalman"][1] / count},
        "gpr": {"ade": sums["gpr"][0] / count, "fde": sums["gpr"][1] / count},
        "center_prior": {"precision": center_stats[0] / count,
                         "recall": center_stats[1] / count,
                         "f1": center_stats[2] / count,
                         "kld": center_stats[3] / count},
        "n_clips": count,
    }
    if lstm_model is not None:
        report["lstm"] = {"ade": sums["lstm"][0] / count,
                          "fde": sums["lstm"][1] / count}
    return report


def fit_lstm_on_dataset(dataset: ClipDataset, epochs: int = 300,
                        seed: int = 0) -> TrajectoryLSTM:
    """Train the LSTM baseline on the split's ground-truth trajectories."""
    obs = np.stack([c.observed_trajectory for c in dataset.clips])
    fut = np.stack([c.future_trajectory for c in dataset.clips])
    return train_lstm_baseline(obs, fut, epochs=epochs, seed=seed)
