"""Predict with the trained model and compare trajectory baselines.

Run demos 01 and 02 first.

    python3 demos/03_predict_and_baselines.py
"""

import os

import numpy as np
import torch

from motor_anticipate import baselines, metrics, synth, viz
from motor_anticipate.inference import predict
from motor_anticipate.model import ModelConfig, load_checkpoint

torch.set_num_threads(1)

data_dir = os.path.join("demos", "_out", "data")
manifest = synth.load_manifest(os.path.join(data_dir, "manifest.json"))
cfg = manifest.config
model_config = ModelConfig(frame_size=cfg.frame_size,
                           num_frames=cfg.num_frames_observed,
                           channels=(4, 6, 8, 10, 10), head_channels=8,
                           num_actions=cfg.num_actions)
model, _, _ = load_checkpoint(os.path.join("demos", "_out", "model.ckpt"),
                              model_config)

entry = manifest.split("val")[0]
clip = synth.load_clip(os.path.join(data_dir, entry.path))

# Deterministic forward pass: action distribution, motor attention volume,
# and the interaction hotspot map for the last observed frame.
action_probs, attention, hotspot = predict(clip.frames, model)
top = np.argsort(action_probs)[::-1][:3]
print("true action:", clip.label.action_id)
print("top-3 predicted:", [(int(a), round(float(action_probs[a]), 3))
                           for a in top])

paths = viz.render_overlays(clip.frames[-1], attention, hotspot,
                            os.path.join("demos", "_out", "overlays"))
print(f"wrote {len(paths)} overlay images to demos/_out/overlays")

# Trajectory baselines work from the observed hand track alone.
observed = clip.observed_trajectory
future = clip.future_trajectory
n = len(future)

kalman = baselines.kalman_forecast(observed, n)
gpr = baselines.gpr_forecast(observed, n)
print()
print("trajectory forecast errors (ADE / FDE):")
for name, pred in [("kalman", kalman), ("gpr", gpr)]:
    ade, fde = metrics.point_displacement_errors(pred, future)
    print(f"  {name:7s} {ade:.4f} / {fde:.4f}")

# The LSTM baseline needs fitting; a handful of clips is enough to show the
# API (see the eval subcommand for a properly trained comparison).
train_clips = [synth.load_clip(os.path.join(data_dir, e.path))
               for e in manifest.split("train")]
lstm = baselines.train_lstm_baseline(
    np.stack([c.observed_trajectory for c in train_clips]),
    np.stack([c.future_trajectory for c in train_clips]),
    epochs=50, seed=0)
ade, fde = metrics.point_displacement_errors(
    baselines.lstm_forecast(observed, n, lstm), future)
print(f"  {'lstm':7s} {ade:.4f} / {fde:.4f}")
