"""Generate a tiny synthetic dataset and look at what is inside a clip.

Run from the repository root after installing the package:

    python3 demos/01_generate_and_inspect.py
"""

import os

import numpy as np
from PIL import Image

from motor_anticipate import priors, synth
from motor_anticipate.types import SceneConfig

out_dir = os.path.join("demos", "_out", "data")
os.makedirs(out_dir, exist_ok=True)

# A small scene: 32x32 frames keep everything fast. Each clip shows a hand
# disc approaching one of three objects; the verb is the approach style and
# the noun is the target object.
cfg = SceneConfig(frame_size=(32, 32), num_frames_observed=8,
                  num_frames_future=4, num_objects=3,
                  verb_set=(0, 1), noun_set=(0, 1, 2), seed=0)
manifest = synth.generate_dataset(cfg, n_train=12, n_val=6, out_dir=out_dir)
print(f"wrote {len(manifest.clips)} clips to {out_dir}")
print("class counts:", manifest.class_counts)

# Load one clip back and unpack its ground truth.
entry = manifest.split("val")[0]
clip = synth.load_clip(os.path.join(out_dir, entry.path))
print(f"label: verb={clip.label.verb_id} noun={clip.label.noun_id} "
      f"action={clip.label.action_id}")
print("future trajectory (normalized xy):")
print(np.round(clip.future_trajectory, 3))
print("contact point:", np.round(clip.hotspot_point, 3))

# Save a filmstrip of the observed frames.
strip = np.concatenate(list(clip.frames), axis=1)
Image.fromarray((strip * 255).astype(np.uint8)).save(
    os.path.join("demos", "_out", "filmstrip.png"))
print("saved demos/_out/filmstrip.png")

# The supervision targets used during training are Gaussian renderings of
# the future path and the contact point on the model's coarse grids.
motor_prior = priors.render_trajectory_prior(clip.future_trajectory,
                                             (4, 8, 8), sigma=1.0)
hotspot_prior = priors.render_point_prior(clip.hotspot_point, (8, 8), sigma=1.0)
print("motor prior slice sums:",
      np.round(motor_prior.probs.sum(axis=(-2, -1)), 6))
print("hotspot prior peak cell:",
      np.unravel_index(hotspot_prior.probs.argmax(), hotspot_prior.probs.shape))
