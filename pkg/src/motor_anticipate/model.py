"""Backbone and the three heads, including the stochastic attention units.

The motor attention head turns block-2 features into a spatiotemporal
probability volume; a Gumbel-Softmax unit draws differentiable samples from
it.  Sampled attention gates block-3 features for hotspot estimation and
block-5 features for action anticipation.  All distributions are normalized
per temporal slice and clamped at 1e-12 before any log.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import torch
from torch import nn

from .container import CKPT_MAGIC, CKPT_VERSION, ContainerError, read_container, write_container

EPS = 1e-12


@dataclass
class GumbelConfig:
    temperature: float = 2.0
    noise_enabled: bool = True
    rng_seed: int = 0

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass
class ModelConfig:
    frame_size: Tuple[int, int] = (64, 64)
    num_frames: int = 16
    in_channels: int = 3
    channels: Tuple[int, ...] = (8, 16, 32, 64, 64)
    head_channels: int = 32
    num_actions: int = 12
    temperature: float = 2.0
    # per-block (t, h, w) strides; attention heads attach to blocks 2, 3, 5
    strides: Tuple[Tuple[int, int, int], ...] = (
        (2, 2, 2), (2, 2, 2), (1, 2, 2), (1, 2, 2), (1, 1, 1))

    def block_grids(self):
        t, h, w = self.num_frames, *self.frame_size
        grids = []
        for st, sh, sw in self.strides:
            t, h, w = t // st, h // sh, w // sw
            grids.append((t, h, w))
        return grids

    @property
    def motor_grid(self):
        return self.block_grids()[1]

    @property
    def hotspot_grid(self):
        return self.block_grids()[2][1:]

    def validate(self) -> None:
        if len(self.channels) != 5 or len(self.strides) != 5:
            raise ValueError("expected 5 blocks")
        g2, g3, g5 = self.motor_grid, self.block_grids()[2], self.block_grids()[4]
        for a, b in ((g2, g3), (g3, g5)):
            for x, y in zip(a, b):
                if y < 1 or x % y:
                    raise ValueError(
                        f"attention grid {a} not reachable from {b} by integer pooling")


def _per_slice_softmax(z: torch.Tensor) -> torch.Tensor:
    """Softmax over the last two (spatial) dims."""
    flat = z.flatten(-2)
    return torch.softmax(flat, dim=-1).reshape(z.shape)


def _unit_mean_gate(att: torch.Tensor) -> torch.Tensor:
    """Rescale attention weights to unit mean per temporal slice.

    Multiplicative gating with a probability map shrinks features by the cell
    count; rescaling keeps feature magnitudes independent of grid resolution
    (uniform attention becomes the identity gate) without changing what the
    map highlights.
    """
    return att / att.mean(dim=(-2, -1), keepdim=True).clamp_min(EPS)


def gumbel_sample(psi: torch.Tensor, cfg: GumbelConfig,
                  generator: Optional[torch.Generator] = None,
                  noise: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Differentiable per-slice sample softmax((log psi + G) / theta).

    ``psi`` has spatial dims last; for attention volumes each leading temporal
    slice is sampled independently.  ``noise`` overrides the drawn Gumbel
    noise (used to freeze it for gradient checks).
    """
    cfg.validate()
    log_psi = torch.log(psi.clamp_min(EPS))
    if noise is None:
        if cfg.noise_enabled:
            if generator is None:
                generator = torch.Generator().manual_seed(cfg.rng_seed)
            u = torch.rand(psi.shape, generator=generator, dtype=psi.dtype)
            noise = -torch.log(-torch.log(u.clamp(EPS, 1.0 - 1e-7)))
        else:
            noise = torch.zeros_like(psi)
    return _per_slice_softmax((log_psi + noise) / cfg.temperature)


def pool_attention(att: torch.Tensor, target_grid) -> torch.Tensor:
    """Non-overlapping max pool of an attention map to a coarser grid.

    The output is NOT renormalized; it is used as multiplicative weights.
    Works on (..., H, W) maps or (..., T, H, W) volumes depending on the
    length of ``target_grid``.
    """
    nd = len(target_grid)
    src = att.shape[-nd:]
    for s, t in zip(src, target_grid):
        if t < 1 or s % t:
            raise ValueError(f"target grid {tuple(target_grid)} does not divide {tuple(src)}")
    lead = att.shape[:-nd]
    shape = list(lead)
    for s, t in zip(src, target_grid):
        shape += [t, s // t]
    x = att.reshape(shape)
    # reduce every "factor" axis, from the back
    for k in range(nd):
        x = x.amax(dim=len(lead) + 2 * (nd - k) - 1)
    return x


class InteractionModel(nn.Module):
    """Joint model: 3D backbone, motor attention, hotspots, anticipation."""

    def __init__(self, config: ModelConfig, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        config.validate()
        self.config = config
        ch = (config.in_channels,) + tuple(config.channels)
        blocks = []
        for i in range(5):
            blocks.append(nn.Sequential(
                nn.Conv3d(ch[i], ch[i + 1], kernel_size=3, padding=1,
                          stride=config.strides[i]),
                nn.BatchNorm3d(ch[i + 1]),
                nn.ReLU(),
            ))
        self.blocks = nn.ModuleList(blocks)
        hid = config.head_channels
        # dilated stack so every output cell sees the whole grid: predicting
        # where the hand is heading needs hand and target context jointly
        self.motor_conv = nn.Sequential(
            nn.Conv3d(config.channels[1], hid, kernel_size=3, padding=1),
            nn.BatchNorm3d(hid),
            nn.ReLU(),
            nn.Conv3d(hid, hid, kernel_size=3, padding=(1, 2, 2),
                      dilation=(1, 2, 2)),
            nn.BatchNorm3d(hid),
            nn.ReLU(),
            nn.Conv3d(hid, hid, kernel_size=3, padding=(1, 4, 4),
                      dilation=(1, 4, 4)),
            nn.BatchNorm3d(hid),
            nn.ReLU(),
            nn.Conv3d(hid, 1, kernel_size=(1, 3, 3), padding=(0, 1, 1)))
        self.hotspot_conv = nn.Sequential(
            nn.Conv2d(config.channels[2], hid, kernel_size=3, padding=1),
            nn.BatchNorm2d(hid),
            nn.ReLU(),
            nn.Conv2d(hid, hid, kernel_size=3, padding=2, dilation=2),
            nn.BatchNorm2d(hid),
            nn.ReLU(),
            nn.Conv2d(hid, 1, kernel_size=3, padding=1))
        self.classifier = nn.Linear(config.channels[4], config.num_actions, bias=False)
        self.to(dtype)
        self.reset_parameters(seed)
        self.gumbel_generator = torch.Generator().manual_seed(seed)

    def reset_parameters(self, seed: int) -> None:
        g = torch.Generator().manual_seed(seed)
        for name, p in self.named_parameters():
            if p.ndim > 1:
                fan_in = p[0].numel()
                std = (2.0 / fan_in) ** 0.5
                with torch.no_grad():
                    p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * std)
            else:
                nn.init.zeros_(p)
        # norm scales start at 1
        for m in self.modules():
            if isinstance(m, (nn.BatchNorm2d, nn.BatchNorm3d)):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
                m.reset_running_stats()

    # --- individual operations ------------------------------------------

    def backbone_forward(self, frames: torch.Tensor):
        """frames: (N, T, H, W, C) in [0, 1] -> list of 5 feature tensors."""
        cfg = self.config
        if frames.shape[1:] != (cfg.num_frames, *cfg.frame_size, cfg.in_channels):
            raise ValueError(
                f"frame shape {tuple(frames.shape[1:])} does not match config "
                f"({cfg.num_frames}, {cfg.frame_size[0]}, {cfg.frame_size[1]}, "
                f"{cfg.in_channels})")
        x = frames.permute(0, 4, 1, 2, 3)
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats

    def motor_head(self, phi2: torch.Tensor):
        """Returns (psi, M): global-softmax map and per-slice renormalization."""
        logits = self.motor_conv(phi2).squeeze(1)  # (N, T_m, H_m, W_m)
        if not torch.all(torch.isfinite(logits)):
            raise ValueError("non-finite motor head activations")
        psi = torch.softmax(logits.flatten(1), dim=-1).reshape(logits.shape)
        # per-slice renormalization of psi, computed from the logits so a
        # slice holding a tiny share of the global mass cannot underflow to
        # an all-zero map
        m = _per_slice_softmax(logits)
        return psi, m

    def hotspot_head(self, phi3: torch.Tensor, sampled_motor: torch.Tensor) -> torch.Tensor:
        """p(A | sampled motor attention, x): softmax 2D map on the last frame."""
        if sampled_motor.shape[-3:] != phi3.shape[-3:]:
            raise ValueError(
                f"motor grid {tuple(sampled_motor.shape[-3:])} does not match "
                f"phi3 grid {tuple(phi3.shape[-3:])}")
        weighted = phi3 * _unit_mean_gate(sampled_motor).unsqueeze(1)
        pooled = weighted.mean(dim=2)  # collapse time
        logits = self.hotspot_conv(pooled).squeeze(1)
        return _per_slice_softmax(logits)

    def anticipation_head(self, phi5: torch.Tensor, sampled_motor: torch.Tensor,
                          sampled_hotspot: torch.Tensor) -> torch.Tensor:
        """Action distribution from dually attended block-5 features."""
        if sampled_motor.shape[-3:] != phi5.shape[-3:]:
            raise ValueError("motor attention grid does not match phi5")
        if sampled_hotspot.shape[-2:] != phi5.shape[-2:]:
            raise ValueError("hotspot grid does not match phi5")
        v_motor = (phi5 * _unit_mean_gate(sampled_motor).unsqueeze(1)).mean(dim=(2, 3, 4))
        v_hot = (phi5[:, :, -1]
                 * _unit_mean_gate(sampled_hotspot).unsqueeze(1)).mean(dim=(2, 3))
        logits = self.classifier(v_motor) + self.classifier(v_hot)
        return torch.softmax(logits, dim=-1)

    # --- full pipeline ----------------------------------------------------

    def forward(self, frames: torch.Tensor, sample: bool = True,
                gumbel: Optional[GumbelConfig] = None,
                motor_noise: Optional[torch.Tensor] = None,
                hotspot_noise: Optional[torch.Tensor] = None):
        """Full pipeline; with sample=False the deterministic expectations
        M and A are fed forward (inference shortcut)."""
        if gumbel is None:
            gumbel = GumbelConfig(temperature=self.config.temperature,
                                  noise_enabled=sample)
        if not sample:
            gumbel = GumbelConfig(temperature=1.0, noise_enabled=False)
        feats = self.backbone_forward(frames)
        phi2, phi3, phi5 = feats[1], feats[2], feats[4]
        psi, m = self.motor_head(phi2)
        # sampling from m equals sampling from psi: the per-slice softmax in
        # the sampler cancels any per-slice constant, and m is stable
        m_tilde = gumbel_sample(m, gumbel, self.gumbel_generator, motor_noise)
        m3 = pool_attention(m_tilde, phi3.shape[-3:])
        a = self.hotspot_head(phi3, m3)
        a_tilde = gumbel_sample(a, gumbel, self.gumbel_generator, hotspot_noise)
        m5 = pool_attention(m_tilde, phi5.shape[-3:])
        a5 = pool_attention(a_tilde, phi5.shape[-2:])
        action = self.anticipation_head(phi5, m5, a5)
        return {"psi": psi, "motor": m, "motor_sample": m_tilde,
                "hotspot": a, "hotspot_sample": a_tilde, "action": action,
                "features": feats}


def save_checkpoint(model: InteractionModel, path, epoch: int = 0,
                    optimizer_state: Optional[dict] = None) -> None:
    """Bit-exact parameter container plus the model config as JSON metadata."""
    meta = {"config": asdict(model.config), "epoch": epoch}
    arrays = {name: p.detach().cpu().numpy()
              for name, p in model.state_dict().items()}
    if optimizer_state:
        for name, buf in optimizer_state.items():
            arrays[f"opt.{name}"] = buf.detach().cpu().numpy()
        meta["has_optimizer"] = True
    write_container(path, CKPT_MAGIC, CKPT_VERSION, meta, arrays)


def load_checkpoint(path, expected_config: Optional[ModelConfig] = None,
                    dtype: torch.dtype = torch.float32):
    """Returns (model, epoch, optimizer_state)."""
    meta, arrays = read_container(path, CKPT_MAGIC, CKPT_VERSION)
    cfg_doc = dict(meta["config"])
    cfg_doc["frame_size"] = tuple(cfg_doc["frame_size"])
    cfg_doc["channels"] = tuple(cfg_doc["channels"])
    cfg_doc["strides"] = tuple(tuple(s) for s in cfg_doc["strides"])
    config = ModelConfig(**cfg_doc)
    if expected_config is not None and expected_config != config:
        if expected_config.num_actions != config.num_actions:
            raise ContainerError(
                f"checkpoint num_actions={config.num_actions} does not match "
                f"expected {expected_config.num_actions}")
        raise ContainerError("checkpoint config does not match expected config")
    model = InteractionModel(config, dtype=dtype)
    state = {}
    opt_state = {}
    for name, arr in arrays.items():
        t = torch.from_numpy(arr).to(dtype)
        if name.startswith("opt."):
            opt_state[name[4:]] = t
        else:
            state[name] = t
    expected_shapes = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    for name, t in state.items():
        if name not in expected_shapes or tuple(t.shape) != expected_shapes[name]:
            raise ContainerError(f"checkpoint parameter {name!r} has unexpected shape")
    model.load_state_dict(state)
    return model, int(meta.get("epoch", 0)), opt_state or None
