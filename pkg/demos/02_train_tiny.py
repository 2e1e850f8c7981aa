"""Train a small joint model for a few epochs on a tiny dataset.

Run demos/01_generate_and_inspect.py first to create demos/_out/data.

    python3 demos/02_train_tiny.py
"""

import os

import torch

from motor_anticipate import synth
from motor_anticipate.model import ModelConfig
from motor_anticipate.training import TrainConfig, train

torch.set_num_threads(1)

data_dir = os.path.join("demos", "_out", "data")
manifest = synth.load_manifest(os.path.join(data_dir, "manifest.json"))
cfg = manifest.config

model_config = ModelConfig(frame_size=cfg.frame_size,
                           num_frames=cfg.num_frames_observed,
                           channels=(4, 6, 8, 10, 10), head_channels=8,
                           num_actions=cfg.num_actions)
train_config = TrainConfig(epochs=4, batch_size=6, learning_rate=5e-3, seed=0)

ckpt = os.path.join("demos", "_out", "model.ckpt")
model, records = train(manifest, data_dir, model_config, train_config,
                       checkpoint_path=ckpt, progress=True)

print()
print("per-epoch loss decomposition:")
for r in records:
    print(f"  epoch {r['epoch']}: ce={r['cross_entropy']:.3f} "
          f"kl_motor={r['kl_motor']:.3f} kl_hotspot={r['kl_hotspot']:.3f} "
          f"val_top1={r['val_top1']:.2f}")
print(f"checkpoint saved to {ckpt}")
