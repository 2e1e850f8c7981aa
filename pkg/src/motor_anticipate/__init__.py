"""Joint forecasting of hand motion, interaction hotspots and next actions."""

from .types import (ActionLabel, AttentionVolume, DatasetManifest,
                    FeaturePyramid, HotspotMap, SceneConfig, VideoClip)

__all__ = [
    "ActionLabel", "AttentionVolume", "DatasetManifest", "FeaturePyramid",
    "HotspotMap", "SceneConfig", "VideoClip",
]

__version__ = "0.1.0"
