"""Shift-based spatio-temporal encoder for stacked pedestrian crops.

A budgeted stand-in for a RubiksNet-style backbone: per-frame 2D stem, then stages of
learnable (t, h, w) shifts followed by pointwise convolutions, so that all temporal
and most spatial mixing comes from learned shifts. No pretrained weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .shift import LearnableShift


@dataclass
class VideoEncoderConfig:
    frames: int = 8
    channels: int = 3
    height: int = 112
    width: int = 112
    stem_width: int = 64
    stem_kernel: int = 3
    widths: tuple[int, ...] = (64, 128, 256, 512)
    blocks: tuple[int, ...] = (1, 1, 1, 1)
    out_dim: int = 128
    shift_init: float = 0.5
    shift_lr_multiplier: float = 6.5e-4
    pretrained: bool = False  # always False; recorded for provenance

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.blocks = tuple(int(b) for b in self.blocks)
        if len(self.widths) != len(self.blocks) or not self.widths:
            raise ValueError("widths and blocks must be non-empty and of equal length")
        if self.out_dim <= 0:
            raise ValueError("out_dim must be positive")

    @property
    def in_channels(self) -> int:
        return self.frames * self.channels


class ShiftBlock(nn.Module):
    """shift -> 1x1 conv -> BN -> ReLU -> shift -> 1x1 conv -> BN, plus residual."""

    def __init__(self, c_in: int, c_out: int, frames: int, shift_init: float):
        super().__init__()
        self.frames = frames
        self.shift1 = LearnableShift(c_in, shift_init)
        self.conv1 = nn.Conv2d(c_in, c_out, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.shift2 = LearnableShift(c_out, shift_init)
        self.conv2 = nn.Conv2d(c_out, c_out, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.proj = None
        if c_in != c_out:
            self.proj = nn.Sequential(nn.Conv2d(c_in, c_out, 1, bias=False), nn.BatchNorm2d(c_out))
        self.relu = nn.ReLU(inplace=False)

    def _shift(self, shift: LearnableShift, x: torch.Tensor) -> torch.Tensor:
        bt, c, h, w = x.shape
        y = shift(x.view(bt // self.frames, self.frames, c, h, w))
        return y.reshape(bt, c, h, w)

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(self._shift(self.shift1, x))))
        out = self.bn2(self.conv2(self._shift(self.shift2, out)))
        res = x if self.proj is None else self.proj(x)
        return self.relu(out + res)


class VideoEncoder(nn.Module):
    def __init__(self, config: VideoEncoderConfig | None = None):
        super().__init__()
        self.config = cfg = config or VideoEncoderConfig()
        self.stem = nn.Sequential(
            nn.Conv2d(cfg.channels, cfg.stem_width, cfg.stem_kernel, stride=2,
                      padding=cfg.stem_kernel // 2, bias=False),
            nn.BatchNorm2d(cfg.stem_width),
            nn.ReLU(),
        )
        stages = []
        c = cfg.stem_width
        for s, (w, n) in enumerate(zip(cfg.widths, cfg.blocks)):
            layers: list[nn.Module] = [nn.AvgPool2d(2)] if s > 0 else []
            for _ in range(n):
                layers.append(ShiftBlock(c, w, cfg.frames, cfg.shift_init))
                c = w
            stages.append(nn.Sequential(*layers))
        self.stages = nn.Sequential(*stages)
        self.head = nn.Linear(c, cfg.out_dim)

    @property
    def out_dim(self) -> int:
        return self.config.out_dim

    def shift_parameters(self):
        return [p for n, p in self.named_parameters() if n.endswith("offsets")]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        expected = (cfg.in_channels, cfg.height, cfg.width)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ValueError(f"video input: expected (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                             f"got {tuple(x.shape)}")
        b = x.shape[0]
        # (B, T*C, H, W) frame-major -> (B*T, C, H, W)
        y = x.reshape(b * cfg.frames, cfg.channels, cfg.height, cfg.width)
        y = self.stages(self.stem(y))
        # global average over time and space
        y = y.view(b, cfg.frames, y.shape[1], -1).mean(dim=(1, 3))
        return self.head(y)


def count_parameters(module: nn.Module) -> int:
    """Trainable parameter count, shift offsets included."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
