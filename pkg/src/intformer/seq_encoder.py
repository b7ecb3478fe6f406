"""Transformer encoder over the concatenated non-image sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .preprocess import FeatureMask

CHANNEL_WIDTHS = {"boxes": 4, "pose": 36, "speed": 1}


@dataclass
class SeqEncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 256
    out_dim: int = 128
    dropout: float = 0.1
    positional_encoding: bool = True
    seq_len: int = 16
    pose_dim: int = 36

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.out_dim <= 0:
            raise ValueError("out_dim must be positive")


def token_width(mask: FeatureMask, pose_dim: int = 36) -> int:
    return 4 * mask.boxes + pose_dim * mask.pose + 1 * mask.speed


def build_tokens(boxes, pose, speed, mask: FeatureMask) -> torch.Tensor:
    """Concatenate the active channels per time step: (..., N, 4 + 36 + 1) at most."""
    if not mask.any_sequence:
        raise ValueError("boxes, pose and speed are all masked off; sequence encoder has no input")
    parts = []
    for on, name, arr in ((mask.boxes, "boxes", boxes), (mask.pose, "pose", pose),
                          (mask.speed, "speed", speed)):
        if on:
            if arr is None:
                raise ValueError(f"mask enables {name} but no {name} sequence was given")
            parts.append(torch.as_tensor(arr))
    return torch.cat(parts, dim=-1)


def sinusoidal_encoding(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float32)[:, None]
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : dim // 2]
    return pe


class EncoderLayer(nn.Module):
    """Post-norm self-attention + feed-forward block."""

    def __init__(self, d: int, heads: int, ff: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(d, heads, dropout=dropout, batch_first=True)
        self.ff = nn.Sequential(nn.Linear(d, ff), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ff, d))
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.drop1 = nn.Dropout(dropout)
        self.drop2 = nn.Dropout(dropout)

    def forward(self, x, return_attention: bool = False):
        a, w = self.attn(x, x, x, need_weights=return_attention, average_attn_weights=False)
        x = self.norm1(x + self.drop1(a))
        x = self.norm2(x + self.drop2(self.ff(x)))
        return (x, w) if return_attention else x


class SeqEncoder(nn.Module):
    def __init__(self, mask: FeatureMask, config: SeqEncoderConfig | None = None):
        super().__init__()
        self.config = cfg = config or SeqEncoderConfig()
        self.mask = mask
        self.in_dim = token_width(mask, cfg.pose_dim)
        if self.in_dim == 0:
            raise ValueError("sequence encoder needs at least one of boxes, pose, speed")
        self.input_proj = nn.Linear(self.in_dim, cfg.d_model)
        if cfg.positional_encoding:
            self.register_buffer("pos", sinusoidal_encoding(cfg.seq_len, cfg.d_model), persistent=False)
        else:
            self.pos = None
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.d_model, cfg.n_heads, cfg.ff_dim, cfg.dropout) for _ in range(cfg.n_layers))
        self.norm = nn.LayerNorm(cfg.d_model)
        self.out = nn.Linear(cfg.d_model, cfg.out_dim)

    @property
    def out_dim(self) -> int:
        return self.config.out_dim

    def pooled(self, tokens: torch.Tensor, return_attention: bool = False):
        """Mean over positions of the encoder output, before the final norm and projection."""
        if tokens.shape[-1] != self.in_dim:
            raise ValueError(f"token width {tokens.shape[-1]} != {self.in_dim} expected for mask {self.mask}")
        if not torch.all(torch.isfinite(tokens)):
            raise FloatingPointError("non-finite input tokens")
        x = self.input_proj(tokens)
        if self.pos is not None:
            x = x + self.pos[: x.shape[-2]].to(x.dtype)
        attn = []
        for i, layer in enumerate(self.layers):
            if return_attention:
                x, w = layer(x, return_attention=True)
                attn.append(w)
            else:
                x = layer(x)
            if not torch.all(torch.isfinite(x)):
                raise FloatingPointError(f"non-finite activations after encoder layer {i}")
        pooled = x.mean(dim=-2)
        return (pooled, attn) if return_attention else pooled

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        unbatched = tokens.dim() == 2
        if unbatched:
            tokens = tokens[None]
        out = self.out(self.norm(self.pooled(tokens)))
        return out[0] if unbatched else out

    def encode(self, boxes=None, pose=None, speed=None) -> torch.Tensor:
        return self(build_tokens(boxes, pose, speed, self.mask))
