"""Deterministic prediction and multi-clip score aggregation."""

from __future__ import annotations

from typing import Tuple

import numpy as np
import torch

from .model import InteractionModel
from .types import AttentionVolume, HotspotMap


@torch.no_grad()
def predict(clip_frames: np.ndarray, model: InteractionModel
            ) -> Tuple[np.ndarray, AttentionVolume, HotspotMap]:
    """Single-clip deterministic prediction.

    Feeds the expectations M and A forward in place of samples (noise
    disabled, temperature 1).  Returns (action distribution, motor attention,
    hotspot map) for one clip of shape (T, H, W, C).
    """
    model.eval()
    frames = torch.as_tensor(np.ascontiguousarray(clip_frames),
                             dtype=next(model.parameters()).dtype)
    out = model(frames.unsqueeze(0), sample=False)
    action = out["action"][0].numpy()
    attention = AttentionVolume(psi=out["psi"][0].numpy(),
                                probs=out["motor"][0].numpy())
    hotspot = HotspotMap(probs=out["hotspot"][0].numpy())
    return action, attention, hotspot


def _crop_offsets(full: int, size: int, n: int) -> np.ndarray:
    if n == 1:
        return np.array([(full - size) // 2])
    return np.round(np.linspace(0, full - size, n)).astype(int)


@torch.no_grad()
def predict_multiclip(video: np.ndarray, model: InteractionModel,
                      n_spatial: int = 3, n_temporal: int = 10) -> np.ndarray:
    """Average deterministic predictions over evenly spaced crops.

    ``video`` is (T_v, H, W_v, C) with T_v and W_v at least the model's input
    size; crops are taken along time and width and the per-crop action
    distributions are arithmetically averaged, then renormalized.
    """
    cfg = model.config
    t_need, (h_need, w_need) = cfg.num_frames, cfg.frame_size
    tv, hv, wv, _ = video.shape
    if tv < t_need:
        raise ValueError(f"insufficient frames: video has {tv}, model needs {t_need}")
    if wv < w_need or hv < h_need:
        raise ValueError("video spatially smaller than the model input")
    t_offs = _crop_offsets(tv, t_need, n_temporal)
    x_offs = _crop_offsets(wv, w_need, n_spatial)
    y0 = (hv - h_need) // 2
    scores = np.zeros(cfg.num_actions)
    for t0 in t_offs:
        for x0 in x_offs:
            crop = video[t0:t0 + t_need, y0:y0 + h_need, x0:x0 + w_need]
            action, _, _ = predict(crop, model)
            scores += action
    scores /= scores.sum()
    return scores


def params_checksum(model: InteractionModel) -> str:
    """Digest of all parameter bytes, for verifying inference purity."""
    import hashlib
    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
