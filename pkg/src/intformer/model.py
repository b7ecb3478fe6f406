"""IntFormer: video encoder + sequence encoder + fusion head -> one crossing logit."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .preprocess import FeatureBundle, FeatureMask, collate
from .seq_encoder import SeqEncoder, SeqEncoderConfig, build_tokens
from .video_encoder import VideoEncoder, VideoEncoderConfig, count_parameters

FUSION_MODES = ("concat", "luong_attention")


@dataclass
class IntFormerConfig:
    video: VideoEncoderConfig = field(default_factory=VideoEncoderConfig)
    seq: SeqEncoderConfig = field(default_factory=SeqEncoderConfig)
    fusion_hidden: int = 128
    dropout: float = 0.5
    fusion: str = "concat"
    mask: FeatureMask = field(default_factory=FeatureMask)

    def __post_init__(self):
        if isinstance(self.video, dict):
            self.video = VideoEncoderConfig(**self.video)
        if isinstance(self.seq, dict):
            self.seq = SeqEncoderConfig(**self.seq)
        if isinstance(self.mask, dict):
            self.mask = FeatureMask(**self.mask)
        elif isinstance(self.mask, str):
            self.mask = FeatureMask.parse(self.mask)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["video"]["widths"] = list(d["video"]["widths"])
        d["video"]["blocks"] = list(d["video"]["blocks"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IntFormerConfig":
        return cls(**d)


class FusionHead(nn.Module):
    """Linear -> dropout -> ReLU -> linear, producing a scalar logit."""

    def __init__(self, in_dim: int, hidden: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden)
        self.drop = nn.Dropout(dropout)
        self.relu = nn.ReLU()
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, x):
        return self.fc2(self.relu(self.drop(self.fc1(x)))).squeeze(-1)


class LuongFusion(nn.Module):
    """Many-to-one attention with a general (bilinear) score, query = sequence feature."""

    def __init__(self, dim: int):
        super().__init__()
        self.score = nn.Linear(dim, dim, bias=False)

    def weights(self, v, s):
        values = torch.stack([v, s], dim=-2)  # (..., 2, dim)
        scores = (values * self.score(s)[..., None, :]).sum(-1)
        return torch.softmax(scores, dim=-1), values

    def forward(self, v, s):
        w, values = self.weights(v, s)
        return (w[..., None] * values).sum(-2)


class IntFormer(nn.Module):
    def __init__(self, config: IntFormerConfig | None = None):
        super().__init__()
        self.config = cfg = config or IntFormerConfig()
        self.mask = cfg.mask
        self.video = VideoEncoder(cfg.video) if cfg.mask.images else None
        self.seq = SeqEncoder(cfg.mask, cfg.seq) if cfg.mask.any_sequence else None
        dims = [m.out_dim for m in (self.video, self.seq) if m is not None]
        if cfg.fusion == "luong_attention":
            if len(dims) != 2:
                raise ValueError("luong_attention fusion needs both branches; use fusion='concat'")
            if dims[0] != dims[1]:
                raise ValueError(f"luong_attention needs equal feature sizes, got {dims}")
            self.attention = LuongFusion(dims[0])
            head_in = dims[0]
        else:
            self.attention = None
            head_in = sum(dims)
        self.head = FusionHead(head_in, cfg.fusion_hidden, cfg.dropout)

    def fuse(self, v: torch.Tensor | None, s: torch.Tensor | None) -> torch.Tensor:
        present = [t for t in (v, s) if t is not None]
        if not present:
            raise ValueError("fusion needs at least one feature vector")
        if self.attention is not None:
            if v is None or s is None:
                raise ValueError("luong_attention fusion needs both branches; use fusion='concat'")
            return self.head(self.attention(v, s))
        return self.head(torch.cat(present, dim=-1))

    def features(self, batch: dict):
        v = s = None
        if self.video is not None:
            v = self.video(batch["video"])
        if self.seq is not None:
            tokens = build_tokens(batch.get("boxes"), batch.get("pose"), batch.get("speed"), self.mask)
            s = self.seq(tokens)
        return v, s

    def forward(self, batch) -> torch.Tensor:
        """Raw logits, shape (B,). ``batch`` is a collated dict or a single FeatureBundle."""
        single = isinstance(batch, FeatureBundle)
        if single:
            batch = collate([batch])
        mask = batch.get("mask")
        if mask is not None and mask != self.mask:
            raise ValueError(f"batch mask {mask} does not match model mask {self.mask}")
        logits = self.fuse(*self.features(batch))
        return logits[0] if single else logits

    def parameter_count(self) -> int:
        return count_parameters(self)

    def shift_parameters(self):
        return [] if self.video is None else self.video.shift_parameters()
