"""Procedural generator for labeled egocentric-interaction clips.

A clip shows a handful of colored shapes plus a skin-colored "hand" disc that
moves along a quadratic Bezier path toward exactly one target object.  The
noun is encoded by the target's shape and color, the verb by the hand's speed
profile along the path, so verbs are only predictable from motion.  Frames
cover the observation window only; the future hand path and the contact point
are returned as ground truth, projected to the last observable frame.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict
from typing import List

import numpy as np

from .container import (CLIP_MAGIC, CLIP_VERSION, ContainerError,
                        read_container, write_container)
from .types import (ActionLabel, DatasetManifest, ManifestEntry, SceneConfig,
                    VideoClip)

HAND_RADIUS = 0.055
OBJECT_RADIUS = 0.07
PATH_MARGIN = 0.06
_MAX_LAYOUT_TRIES = 200

# (r, g, b) per noun id; shapes are matched one-to-one below.
_NOUN_COLORS = {
    0: (0.85, 0.15, 0.15),
    1: (0.15, 0.70, 0.20),
    2: (0.20, 0.30, 0.90),
    3: (0.90, 0.80, 0.10),
}
_NOUN_SHAPES = {0: "square", 1: "circle", 2: "triangle", 3: "diamond"}
_HAND_COLOR = (0.93, 0.48, 0.25)
_BACKGROUND = 0.82


class GenerationError(RuntimeError):
    """Raised when no valid scene layout can be found for a config."""


def _speed_profile(verb_id: int, u: np.ndarray) -> np.ndarray:
    """Arc position s in [0, 1] as a function of normalized time u."""
    k = verb_id % 3
    if k == 0:  # steady approach
        return u
    if k == 1:  # slow start, late rush
        return u ** 2
    return 1.0 - (1.0 - u) ** 2  # fast start, gentle landing


def _bezier(p0, p1, p2, s):
    s = np.asarray(s)[..., None]
    return (1 - s) ** 2 * p0 + 2 * s * (1 - s) * p1 + s ** 2 * p2


def _rotation_about(center, angle):
    c, s = np.cos(angle), np.sin(angle)
    cx, cy = center
    H = np.array([[c, -s, cx - c * cx + s * cy],
                  [s, c, cy - s * cx - c * cy],
                  [0.0, 0.0, 1.0]])
    return H


def _camera_homographies(cfg: SceneConfig, rng: np.random.Generator,
                         n_transitions: int) -> np.ndarray:
    Hs = np.tile(np.eye(3), (n_transitions, 1, 1))
    if cfg.camera_motion == "none":
        return Hs
    drift = rng.normal(0.0, 0.0015, size=2)
    for t in range(n_transitions):
        d = drift + rng.normal(0.0, 0.0008, size=2)
        H = np.eye(3)
        H[0, 2] = -d[0]
        H[1, 2] = -d[1]
        if cfg.camera_motion == "translation+rotation":
            H = H @ _rotation_about((0.5, 0.5), rng.normal(0.0, 0.004))
        Hs[t] = H
    return Hs


def _apply_h(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    homog = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    out = homog @ H.T
    return out[:, :2] / out[:, 2:3]


def _shape_mask(shape: str, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) < r
    if shape == "circle":
        return dx * dx + dy * dy < r * r
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) < r * 1.3
    # upward triangle: y grows downward in image coordinates
    return (dy > -r) & (dy < r) & (np.abs(dx) < (dy + r) * 0.6)


def _layout_scene(cfg: SceneConfig, rng: np.random.Generator, noun_id: int):
    """Pick object positions, nouns present, hand path.  Returns None on failure."""
    others = [n for n in cfg.noun_set if n != noun_id]
    extra = list(rng.permutation(others)[:cfg.num_objects - 1])
    nouns = [noun_id] + [int(n) for n in extra]

    positions = []
    for _ in range(len(nouns)):
        for _try in range(50):
            p = rng.uniform([0.15, 0.12], [0.85, 0.55])
            if all(np.linalg.norm(p - q) > 2.6 * OBJECT_RADIUS for q in positions):
                positions.append(p)
                break
        else:
            return None
    positions = np.array(positions)

    start = rng.uniform([0.15, 0.78], [0.85, 0.92])
    contact = positions[0] + rng.uniform(-0.25, 0.25, size=2) * OBJECT_RADIUS
    mid = 0.5 * (start + contact)
    direction = contact - start
    norm = np.linalg.norm(direction)
    if norm < 0.15:
        return None
    perp = np.array([-direction[1], direction[0]]) / norm
    curvature = rng.uniform(0.05, 0.22) * rng.choice([-1.0, 1.0])
    control = mid + curvature * perp

    path = _bezier(start, control, contact, np.linspace(0, 1, 64))
    lo, hi = PATH_MARGIN, 1.0 - PATH_MARGIN
    if path.min() < lo or path.max() > hi:
        return None
    return nouns, positions, (start, control, contact), curvature


def _render_frame(cfg: SceneConfig, world_to_frame: np.ndarray, nouns, positions,
                  hand_world: np.ndarray) -> np.ndarray:
    H, W = cfg.frame_size
    xs = (np.arange(W) + 0.5) / W
    ys = (np.arange(H) + 0.5) / H
    gx, gy = np.meshgrid(xs, ys)
    frame_pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    world_pts = _apply_h(np.linalg.inv(world_to_frame), frame_pts)
    wx = world_pts[:, 0].reshape(H, W)
    wy = world_pts[:, 1].reshape(H, W)

    img = np.full((H, W, 3), _BACKGROUND, dtype=np.float64)
    for noun, pos in zip(nouns, positions):
        mask = _shape_mask(_NOUN_SHAPES[noun], wx - pos[0], wy - pos[1], OBJECT_RADIUS)
        img[mask] = _NOUN_COLORS[noun]
    dh = (wx - hand_world[0]) ** 2 + (wy - hand_world[1]) ** 2
    img[dh < HAND_RADIUS ** 2] = _HAND_COLOR
    return img


def generate_clip(cfg: SceneConfig, seed: int, with_layout: bool = False):
    """Render one deterministic clip; (cfg, seed) fully determines the bytes.

    With ``with_layout`` the (nouns, world positions, bezier control points)
    tuple of the chosen scene is returned alongside the clip, for harness
    checks that need the hidden ground truth.
    """
    cfg.validate()
    num_actions = cfg.num_actions
    action_id = seed % num_actions
    verb_id = cfg.verb_set[action_id // len(cfg.noun_set)]
    noun_id = cfg.noun_set[action_id % len(cfg.noun_set)]

    rng = np.random.default_rng([cfg.seed, seed])
    T, F = cfg.num_frames_observed, cfg.num_frames_future
    N = T + F

    for _attempt in range(_MAX_LAYOUT_TRIES):
        layout = _layout_scene(cfg, rng, noun_id)
        if layout is None:
            continue
        nouns, positions, (start, control, contact), _curv = layout
        motions = _camera_homographies(cfg, rng, N - 1)

        # world -> frame t composition
        W_t = [np.eye(3)]
        for t in range(N - 1):
            W_t.append(motions[t] @ W_t[-1])

        u = np.arange(N) / (N - 1)
        s = _speed_profile(verb_id, u)
        hand_world = _bezier(start, control, contact, s)

        W_last = W_t[T - 1]
        in_frame = True
        lo, hi = PATH_MARGIN * 0.5, 1.0 - PATH_MARGIN * 0.5
        for t in range(T):
            p = _apply_h(W_t[t], hand_world[t])[0]
            if p.min() < lo or p.max() > hi:
                in_frame = False
                break
        projected = _apply_h(W_last, hand_world)
        if not in_frame or projected.min() < 0.01 or projected.max() > 0.99:
            continue

        frames = np.empty((T, cfg.frame_size[0], cfg.frame_size[1], 3), dtype=np.float32)
        for t in range(T):
            img = _render_frame(cfg, W_t[t], nouns, positions, hand_world[t])
            if cfg.noise_level > 0:
                img = img + rng.normal(0.0, cfg.noise_level, size=img.shape)
            frames[t] = np.clip(img, 0.0, 1.0).astype(np.float32)

        label = ActionLabel.from_pair(verb_id, noun_id, cfg)
        observed = projected[:T].copy()
        if cfg.track_noise > 0:
            # independent stream so frames and targets stay byte-identical
            # for any track_noise setting
            jitter_rng = np.random.default_rng([cfg.seed, seed, 1])
            observed += jitter_rng.normal(0.0, cfg.track_noise, observed.shape)
        clip = VideoClip(
            frames=frames,
            label=label,
            future_trajectory=projected[T:].copy(),
            hotspot_point=_apply_h(W_last, contact)[0],
            camera_motions=motions,
            observed_trajectory=observed,
        )
        clip.validate()
        if with_layout:
            return clip, (nouns, positions, (start, control, contact))
        return clip

    raise GenerationError(
        f"hand path exits the frame for every candidate layout (seed={seed})")


def save_clip(clip: VideoClip, path) -> None:
    meta = {"verb_id": clip.label.verb_id, "noun_id": clip.label.noun_id,
            "action_id": clip.label.action_id}
    arrays = {
        "frames": clip.frames.astype("<f4"),
        "future_trajectory": clip.future_trajectory.astype("<f8"),
        "hotspot_point": np.asarray(clip.hotspot_point, dtype="<f8"),
        "camera_motions": clip.camera_motions.astype("<f8"),
        "observed_trajectory": clip.observed_trajectory.astype("<f8"),
    }
    write_container(path, CLIP_MAGIC, CLIP_VERSION, meta, arrays)


def load_clip(path) -> VideoClip:
    meta, arrays = read_container(path, CLIP_MAGIC, CLIP_VERSION)
    required = ("frames", "future_trajectory", "hotspot_point", "camera_motions")
    for key in required:
        if key not in arrays:
            raise ContainerError(f"corrupt clip: missing array {key!r} in {path}")
    frames = arrays["frames"]
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ContainerError(f"corrupt clip: bad frame dims {frames.shape}")
    label = ActionLabel(meta["verb_id"], meta["noun_id"], meta["action_id"])
    return VideoClip(
        frames=frames,
        label=label,
        future_trajectory=arrays["future_trajectory"],
        hotspot_point=arrays["hotspot_point"],
        camera_motions=arrays["camera_motions"],
        observed_trajectory=arrays.get("observed_trajectory"),
    )


def _val_seed(i: int) -> int:
    return 1_000_000 + i


def generate_dataset(cfg: SceneConfig, n_train: int, n_val: int,
                     out_dir) -> DatasetManifest:
    """Write a class-balanced dataset directory: manifest.json + clips/*.bin."""
    if n_train <= 0 or n_val < 0:
        raise ValueError("empty split: n_train must be > 0 and n_val >= 0")
    os.makedirs(os.path.join(out_dir, "clips"), exist_ok=True)

    entries: List[ManifestEntry] = []
    counts: dict = {}
    jobs = [("train", i, i) for i in range(n_train)]
    jobs += [("val", n_train + i, _val_seed(i)) for i in range(n_val)]
    for split, idx, seed in jobs:
        clip = generate_clip(cfg, seed)
        rel = os.path.join("clips", f"clip_{idx:06d}.bin")
        save_clip(clip, os.path.join(out_dir, rel))
        entries.append(ManifestEntry(rel, clip.label.verb_id, clip.label.noun_id,
                                     clip.label.action_id, split))
        counts[clip.label.action_id] = counts.get(clip.label.action_id, 0) + 1

    manifest = DatasetManifest(clips=entries, class_counts=counts, config=cfg)
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "format_version": manifest.format_version,
        "config": asdict(manifest.config),
        "class_counts": {str(k): v for k, v in manifest.class_counts.items()},
        "clips": [asdict(e) for e in manifest.clips],
    }
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
    os.replace(tmp, path)


def load_manifest(path) -> DatasetManifest:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != 1:
        raise ContainerError(
            f"format_version mismatch: expected 1, found {doc.get('format_version')}")
    cfg_doc = doc["config"]
    for key in ("frame_size", "verb_set", "noun_set"):
        cfg_doc[key] = tuple(cfg_doc[key])
    cfg = SceneConfig(**cfg_doc)
    clips = [ManifestEntry(**e) for e in doc["clips"]]
    counts = {int(k): v for k, v in doc["class_counts"].items()}
    return DatasetManifest(clips=clips, class_counts=counts, config=cfg,
                           format_version=doc["format_version"])


def manifest_checksum(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
