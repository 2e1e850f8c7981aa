"""Variational training loss and the optimization loop."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import torch

from . import priors, synth
from .model import (EPS, GumbelConfig, InteractionModel, ModelConfig,
                    load_checkpoint, save_checkpoint)
from .types import DatasetManifest


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs: int = 10
    cosine_decay: bool = True
    lambda_motor: float = 1.0
    lambda_hotspot: float = 1.0
    temperature: float = 2.0
    prior_sigma: float = 1.0
    augment_flip: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_motor < 0 or self.lambda_hotspot < 0:
            raise ValueError("loss weights must be >= 0")


def kl_divergence(p, q):
    """KL(p || q) with 1e-12 clamping; volumes average their per-slice KLs.

    Accepts numpy arrays or torch tensors; returns a scalar of the same kind.
    """
    was_numpy = not torch.is_tensor(p)
    p_t = torch.as_tensor(p, dtype=torch.float64) if was_numpy else p
    q_t = torch.as_tensor(q, dtype=p_t.dtype) if not torch.is_tensor(q) else q
    if p_t.shape != q_t.shape:
        raise ValueError(f"shape mismatch {tuple(p_t.shape)} vs {tuple(q_t.shape)}")
    per_cell = p_t * (torch.log(p_t.clamp_min(EPS)) - torch.log(q_t.clamp_min(EPS)))
    if p_t.ndim >= 3:
        # mean over temporal slices (and any batch dims)
        kl = per_cell.sum(dim=(-2, -1)).mean()
    else:
        kl = per_cell.sum()
    return float(kl) if was_numpy else kl


def loss(action_probs, y, motor, prior_motor, hotspot, prior_hotspot,
         lambda_motor: float = 1.0, lambda_hotspot: float = 1.0):
    """Cross entropy plus weighted KL alignment terms.

    Returns (total, parts) where parts holds the three detached terms.
    """
    action_probs = torch.as_tensor(action_probs)
    y_t = torch.as_tensor(y, dtype=torch.long)
    if y_t.ndim == 0:
        y_t = y_t.unsqueeze(0)
    if action_probs.ndim == 1:
        action_probs = action_probs.unsqueeze(0)
    if (y_t < 0).any() or (y_t >= action_probs.shape[-1]).any():
        raise ValueError("invalid label")
    ce = -torch.log(action_probs.gather(1, y_t[:, None]).clamp_min(EPS)).mean()
    kl_m = kl_divergence(torch.as_tensor(motor), torch.as_tensor(prior_motor))
    kl_a = kl_divergence(torch.as_tensor(hotspot), torch.as_tensor(prior_hotspot))
    total = ce
    if lambda_hotspot > 0:
        total = total + lambda_hotspot * kl_a
    if lambda_motor > 0:
        total = total + lambda_motor * kl_m
    parts = {"cross_entropy": float(ce.detach()), "kl_hotspot": float(kl_a.detach()),
             "kl_motor": float(kl_m.detach())}
    return total, parts


class ClipDataset:
    """Loads clips of one split plus their rendered prior distributions."""

    def __init__(self, manifest: DatasetManifest, data_dir, split: str,
                 model_config: ModelConfig, sigma: float = 1.0,
                 cache: bool = True):
        self.entries = manifest.split(split)
        if not self.entries:
            raise ValueError(f"empty split {split!r}")
        self.data_dir = data_dir
        self.cache = cache
        self._frames: Dict[int, np.ndarray] = {}
        self.labels = np.array([e.action_id for e in self.entries])
        self.prior_motor = np.empty((len(self.entries), *model_config.motor_grid),
                                    dtype=np.float32)
        self.prior_hotspot = np.empty((len(self.entries), *model_config.hotspot_grid),
                                      dtype=np.float32)
        self.clips = []
        for i, e in enumerate(self.entries):
            clip = synth.load_clip(os.path.join(data_dir, e.path))
            self.prior_motor[i] = priors.render_trajectory_prior(
                clip.future_trajectory, model_config.motor_grid, sigma).probs
            self.prior_hotspot[i] = priors.render_point_prior(
                clip.hotspot_point, model_config.hotspot_grid, sigma).probs
            self.clips.append(clip)
            if cache:
                self._frames[i] = clip.frames
            else:
                clip.frames = None

    def __len__(self):
        return len(self.entries)

    def frames(self, i: int) -> np.ndarray:
        if i in self._frames:
            return self._frames[i]
        clip = synth.load_clip(os.path.join(self.data_dir, self.entries[i].path))
        return clip.frames

    def batch(self, idx: np.ndarray, flip: bool = False):
        frames = np.stack([self.frames(int(i)) for i in idx])
        qm = self.prior_motor[idx]
        qa = self.prior_hotspot[idx]
        if flip:
            frames = frames[:, :, :, ::-1].copy()
            qm = qm[..., ::-1].copy()
            qa = qa[..., ::-1].copy()
        return (torch.from_numpy(frames), torch.from_numpy(qm),
                torch.from_numpy(qa), torch.from_numpy(self.labels[idx]))


def _cosine_lr(base: float, epoch: int, total: int) -> float:
    return base * 0.5 * (1.0 + math.cos(math.pi * epoch / max(total, 1)))


def _named_momentum_buffers(optimizer, named_params):
    out = {}
    for name, p in named_params:
        state = optimizer.state.get(p, {})
        buf = state.get("momentum_buffer")
        if buf is not None:
            out[name] = buf
    return out


@torch.no_grad()
def evaluate_split(model: InteractionModel, dataset: ClipDataset,
                   batch_size: int = 32):
    """Deterministic-path val loss terms and top-1 accuracy."""
    model.eval()
    n = len(dataset)
    correct = 0
    ce_sum = 0.0
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        frames, _, _, labels = dataset.batch(idx)
        out = model(frames, sample=False)
        probs = out["action"]
        ce_sum += float(-torch.log(
            probs.gather(1, labels[:, None]).clamp_min(EPS)).sum())
        correct += int((probs.argmax(dim=1) == labels).sum())
    model.train()
    return {"val_loss": ce_sum / n, "val_top1": correct / n}


def train(manifest: DatasetManifest, data_dir, model_config: ModelConfig,
          train_config: TrainConfig, checkpoint_path=None, log_path=None,
          resume_from=None, cache_clips: bool = True,
          progress: bool = False):
    """SGD over the variational loss; returns (model, per-epoch metric records)."""
    train_config.validate()
    torch.manual_seed(train_config.seed)

    train_set = ClipDataset(manifest, data_dir, "train", model_config,
                            sigma=train_config.prior_sigma, cache=cache_clips)
    val_set = ClipDataset(manifest, data_dir, "val", model_config,
                          sigma=train_config.prior_sigma, cache=cache_clips)

    start_epoch = 0
    if resume_from is not None:
        model, start_epoch, opt_state = load_checkpoint(resume_from, model_config)
    else:
        model = InteractionModel(model_config, seed=train_config.seed)
        opt_state = None
    model.gumbel_generator = torch.Generator().manual_seed(train_config.seed + 7919)
    model.train()

    optimizer = torch.optim.SGD(model.parameters(), lr=train_config.learning_rate,
                                momentum=train_config.momentum,
                                weight_decay=train_config.weight_decay)
    named = list(model.named_parameters())
    if opt_state:
        for name, p in named:
            if name in opt_state:
                optimizer.state[p] = {"momentum_buffer": opt_state[name].clone()}

    rng = np.random.default_rng(train_config.seed)
    # keep shuffle streams aligned when resuming mid-run
    for _ in range(start_epoch):
        rng.permutation(len(train_set))

    gumbel = GumbelConfig(temperature=train_config.temperature, noise_enabled=True)
    records: List[dict] = []
    best_top1 = -1.0
    log_file = open(log_path, "a") if log_path else None

    try:
        for epoch in range(start_epoch, train_config.epochs):
            t0 = time.time()
            if train_config.cosine_decay:
                lr = _cosine_lr(train_config.learning_rate, epoch, train_config.epochs)
                for group in optimizer.param_groups:
                    group["lr"] = lr
            order = rng.permutation(len(train_set))
            sums = {"cross_entropy": 0.0, "kl_hotspot": 0.0, "kl_motor": 0.0}
            correct = 0
            for lo in range(0, len(order), train_config.batch_size):
                idx = order[lo:lo + train_config.batch_size]
                flip = train_config.augment_flip and rng.random() < 0.5
                frames, qm, qa, labels = train_set.batch(idx, flip=flip)
                try:
                    out = model(frames, sample=True, gumbel=gumbel)
                except ValueError as exc:
                    if "non-finite" in str(exc):
                        raise TrainingDivergedError(
                            f"diverged: {exc} at epoch {epoch}") from exc
                    raise
                total, parts = loss(out["action"], labels, out["motor"], qm,
                                    out["hotspot"], qa,
                                    train_config.lambda_motor,
                                    train_config.lambda_hotspot)
                if not torch.isfinite(total):
                    raise TrainingDivergedError(
                        f"diverged: non-finite loss at epoch {epoch}")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                w = len(idx)
                for k in sums:
                    sums[k] += parts[k] * w
                correct += int((out["action"].argmax(dim=1) == labels).sum())

            record = {"epoch": epoch,
                      "lr": optimizer.param_groups[0]["lr"],
                      "train_top1": correct / len(train_set),
                      **{k: v / len(train_set) for k, v in sums.items()}}
            record["train_loss"] = (record["cross_entropy"]
                                    + train_config.lambda_hotspot * record["kl_hotspot"]
                                    + train_config.lambda_motor * record["kl_motor"])
            try:
                record.update(evaluate_split(model, val_set))
            except ValueError as exc:
                if "non-finite" in str(exc):
                    raise TrainingDivergedError(
                        f"diverged: {exc} at epoch {epoch}") from exc
                raise
            record["wall_time"] = time.time() - t0
            records.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if progress:
                print(f"epoch {epoch}: loss={record['train_loss']:.4f} "
                      f"val_top1={record['val_top1']:.3f}", flush=True)
            if checkpoint_path and record["val_top1"] >= best_top1:
                best_top1 = record["val_top1"]
                save_checkpoint(model, checkpoint_path, epoch=epoch + 1,
                                optimizer_state=_named_momentum_buffers(optimizer, named))
    finally:
        if log_file:
            log_file.close()
    return model, records
