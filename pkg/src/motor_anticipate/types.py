"""Core datatypes shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

# A trajectory is an (N, 2) float array of normalized (x, y) image coordinates.
Trajectory = np.ndarray

CAMERA_MOTIONS = ("none", "translation", "translation+rotation")


@dataclass
class SceneConfig:
    """Parameters of the synthetic clip generator."""

    frame_size: Tuple[int, int] = (64, 64)  # (H, W)
    num_frames_observed: int = 16
    num_frames_future: int = 8
    num_objects: int = 4
    verb_set: Tuple[int, ...] = (0, 1, 2)
    noun_set: Tuple[int, ...] = (0, 1, 2, 3)
    camera_motion: str = "none"
    noise_level: float = 0.02
    # detector-style jitter on the stored observed hand track; emulates the
    # noise of a hand detector feeding the pseudo-labeling pipeline
    track_noise: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        if self.num_frames_observed < 8:
            raise ValueError("num_frames_observed must be >= 8")
        if self.num_objects < 1:
            raise ValueError("num_objects must be >= 1")
        if self.frame_size[0] < 32 or self.frame_size[1] < 32:
            raise ValueError("frame_size must be at least (32, 32)")
        if self.camera_motion not in CAMERA_MOTIONS:
            raise ValueError(f"unknown camera_motion {self.camera_motion!r}")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if self.track_noise < 0:
            raise ValueError("track_noise must be >= 0")
        if self.num_objects > len(self.noun_set):
            raise ValueError("num_objects cannot exceed the noun set size")

    @property
    def num_actions(self) -> int:
        return len(self.verb_set) * len(self.noun_set)


@dataclass(frozen=True)
class ActionLabel:
    """A (verb, noun) pair with its flat action index."""

    verb_id: int
    noun_id: int
    action_id: int

    @staticmethod
    def from_pair(verb_id: int, noun_id: int, cfg: SceneConfig) -> "ActionLabel":
        vi = cfg.verb_set.index(verb_id)
        ni = cfg.noun_set.index(noun_id)
        return ActionLabel(verb_id, noun_id, vi * len(cfg.noun_set) + ni)


@dataclass
class VideoClip:
    """An observed video segment plus its future ground truth.

    Frames cover only the observation window; the future hand path and the
    contact point are expressed in normalized coordinates of the last
    observable frame, after compensating camera motion.
    """

    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    label: ActionLabel
    future_trajectory: Trajectory  # (num_frames_future, 2)
    hotspot_point: np.ndarray  # (2,)
    camera_motions: np.ndarray  # (T + F - 1, 3, 3), frame t -> t + 1
    observed_trajectory: Optional[Trajectory] = None  # (T, 2) hand centers

    def validate(self) -> None:
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames contain non-finite values")
        if not np.all((self.hotspot_point >= 0) & (self.hotspot_point <= 1)):
            raise ValueError("hotspot_point outside the unit square")


@dataclass
class ManifestEntry:
    path: str
    verb_id: int
    noun_id: int
    action_id: int
    split: str


@dataclass
class DatasetManifest:
    """Index of a generated dataset directory."""

    clips: List[ManifestEntry]
    class_counts: dict
    config: SceneConfig
    format_version: int = 1

    def split(self, tag: str) -> List[ManifestEntry]:
        return [e for e in self.clips if e.split == tag]


@dataclass
class AttentionVolume:
    """Motor attention: pre-normalization map psi and per-slice probabilities."""

    psi: np.ndarray  # (T_m, H_m, W_m)
    probs: np.ndarray  # (T_m, H_m, W_m), each temporal slice sums to 1


@dataclass
class HotspotMap:
    """A 2D probability map over the last observable frame."""

    probs: np.ndarray  # (H_a, W_a)


@dataclass
class FeaturePyramid:
    """Backbone features from the five convolution blocks."""

    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    phi4: np.ndarray
    phi5: np.ndarray

    blocks: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        self.blocks = (self.phi1, self.phi2, self.phi3, self.phi4, self.phi5)
