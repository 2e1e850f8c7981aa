"""PNG overlays of attention maps on the last observable frame."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .metrics import argmax_points
from .types import AttentionVolume, HotspotMap

# trajectory point colors, in temporal slice order
SLICE_COLORS = ((255, 255, 0), (0, 255, 0), (0, 255, 255), (255, 0, 255))


def _upsample(heatmap: np.ndarray, shape) -> np.ndarray:
    H, W = shape
    h, w = heatmap.shape
    reps = (H // h, W // w)
    up = np.kron(heatmap, np.ones(reps))
    return up[:H, :W]


def overlay_heatmap(frame: np.ndarray, heatmap: np.ndarray,
                    alpha: float = 0.55) -> np.ndarray:
    """Blend a red-intensity rendering of the heatmap over an RGB frame."""
    hm = _upsample(heatmap, frame.shape[:2])
    hm = hm / max(hm.max(), 1e-12)
    out = frame.copy()
    out[..., 0] = (1 - alpha * hm) * frame[..., 0] + alpha * hm
    out[..., 1] = (1 - alpha * hm) * frame[..., 1]
    out[..., 2] = (1 - alpha * hm) * frame[..., 2]
    return np.clip(out, 0, 1)


def _draw_point(img: np.ndarray, point, color, radius: int = 2) -> None:
    H, W, _ = img.shape
    cx = int(point[0] * W)
    cy = int(point[1] * H)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx * dx + dy * dy <= radius * radius:
                y, x = cy + dy, cx + dx
                if 0 <= y < H and 0 <= x < W:
                    img[y, x] = np.asarray(color) / 255.0


def _save(img: np.ndarray, path) -> None:
    Image.fromarray((np.clip(img, 0, 1) * 255).astype(np.uint8)).save(path)


def render_overlays(last_frame: np.ndarray, attention: AttentionVolume,
                    hotspot: HotspotMap, out_dir) -> list:
    """Write motor-slice, hotspot, and trajectory overlays; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t in range(attention.probs.shape[0]):
        p = os.path.join(out_dir, f"motor_{t:02d}.png")
        _save(overlay_heatmap(last_frame, attention.probs[t]), p)
        paths.append(p)
    p = os.path.join(out_dir, "hotspot.png")
    _save(overlay_heatmap(last_frame, hotspot.probs), p)
    paths.append(p)

    traj_img = last_frame.copy()
    for t, pt in enumerate(argmax_points(attention.probs)):
        _draw_point(traj_img, pt, SLICE_COLORS[t % len(SLICE_COLORS)])
    p = os.path.join(out_dir, "trajectory.png")
    _save(traj_img, p)
    paths.append(p)
    return paths
