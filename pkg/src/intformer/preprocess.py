"""Per-window feature preprocessing and model input layouts.

Images: 16 frames subsampled to 8, cropped to the pedestrian box, warped to 112x112,
scaled from [0, 255] to [0, 1] and stacked along channels (8 * 3 = 24).
Boxes and pose: divided by the image size (1920 x 1080). Speed: z-scored with
training-set statistics (population std).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import IMAGE_HEIGHT, IMAGE_WIDTH, ObservationWindow


@dataclass(frozen=True)
class FeatureMask:
    images: bool = True
    boxes: bool = True
    pose: bool = True
    speed: bool = True

    def __post_init__(self):
        if not any(self.as_tuple()):
            raise ValueError("feature mask must enable at least one input")

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.images, self.boxes, self.pose, self.speed)

    @property
    def any_sequence(self) -> bool:
        return self.boxes or self.pose or self.speed

    @property
    def code(self) -> str:
        """e.g. ``"1001"`` for images + speed."""
        return "".join("1" if b else "0" for b in self.as_tuple())

    @classmethod
    def from_code(cls, code: str) -> "FeatureMask":
        if len(code) != 4 or set(code) - {"0", "1"}:
            raise ValueError(f"mask code must be 4 binary digits, got {code!r}")
        return cls(*(c == "1" for c in code))

    @classmethod
    def parse(cls, text: str) -> "FeatureMask":
        """Accept a binary code ("1001") or a '+'-joined name list ("images+speed")."""
        text = text.strip()
        if len(text) == 4 and set(text) <= {"0", "1"}:
            return cls.from_code(text)
        names = {"images", "imgs", "boxes", "bbs", "pose", "speed"}
        parts = [p.strip().lower() for p in text.split("+") if p.strip()]
        bad = [p for p in parts if p not in names]
        if bad:
            raise ValueError(f"unknown feature names {bad}")
        return cls(images=bool({"images", "imgs"} & set(parts)),
                   boxes=bool({"boxes", "bbs"} & set(parts)),
                   pose="pose" in parts, speed="speed" in parts)

    def __str__(self):
        names = [n for n, on in zip(("images", "boxes", "pose", "speed"), self.as_tuple()) if on]
        return "+".join(names)


@dataclass(frozen=True)
class NormStats:
    speed_mean: float | None = None
    speed_std: float | None = None
    image_width: float = IMAGE_WIDTH
    image_height: float = IMAGE_HEIGHT

    def __post_init__(self):
        if self.speed_std is not None and not self.speed_std > 0:
            raise ValueError(f"speed_std must be > 0, got {self.speed_std}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**d)


@dataclass(frozen=True)
class PreprocessConfig:
    obs_len: int = 16
    channels: int = 3
    height: int = 112
    width: int = 112
    subsample_phase: int = 0  # 0 keeps even indices, 1 odd

    @property
    def n_sampled(self) -> int:
        return self.obs_len // 2

    @property
    def video_channels(self) -> int:
        return self.obs_len * self.channels // 2


def compute_norm_stats(train_windows: Sequence[ObservationWindow]) -> NormStats:
    """Speed mean and population std over every frame of the training windows."""
    speeds = [w.speed for w in train_windows if w.speed is not None]
    if not speeds:
        return NormStats()
    v = np.concatenate(speeds)
    std = float(v.std())  # ddof=0
    if std <= 0:
        raise ValueError("training speed has zero variance; cannot z-score")
    return NormStats(speed_mean=float(v.mean()), speed_std=std)


def subsample_frames(frames: Sequence, phase: int = 0, obs_len: int = 16) -> list:
    if len(frames) != obs_len:
        raise ValueError(f"expected {obs_len} frames, got {len(frames)}")
    if phase not in (0, 1):
        raise ValueError("phase must be 0 or 1")
    return list(frames)[phase::2]


def _crop_bounds(box, frame_h: int, frame_w: int):
    x1, y1, x2, y2 = (float(v) for v in box)
    c0 = int(np.floor(max(x1, 0.0)))
    r0 = int(np.floor(max(y1, 0.0)))
    c1 = int(np.ceil(min(x2, frame_w)))
    r1 = int(np.ceil(min(y2, frame_h)))
    return (r0, r1), (c0, c1)


def resize_bilinear(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Anisotropic bilinear resize of an H x W x C array to ``size`` = (height, width)."""
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    return out[0].permute(1, 2, 0).numpy()


def crop_resize(frame: np.ndarray, box, size: tuple[int, int] = (112, 112),
                where: str = "") -> np.ndarray:
    h, w = frame.shape[:2]
    (r0, r1), (c0, c1) = _crop_bounds(box, h, w)
    if r1 <= r0 or c1 <= c0:
        raise ValueError(f"box {tuple(box)} has zero area after clipping{' in ' + where if where else ''}")
    return resize_bilinear(frame[r0:r1, c0:c1], size)


def crop_resize_from(source, video_id: str, frame_index: int, box,
                     size: tuple[int, int] = (112, 112)) -> np.ndarray:
    """Same as :func:`crop_resize` but reads only the box region from a frame source."""
    (r0, r1), (c0, c1) = _crop_bounds(box, IMAGE_HEIGHT, IMAGE_WIDTH)
    if r1 <= r0 or c1 <= c0:
        raise ValueError(f"box {tuple(box)} has zero area after clipping "
                         f"(video_id={video_id!r}, frame_index={frame_index})")
    return resize_bilinear(source.region(video_id, int(frame_index), (r0, r1), (c0, c1)), size)


def normalize_image(img: np.ndarray, value_range=(0.0, 255.0)) -> np.ndarray:
    lo, hi = value_range
    return (np.asarray(img, dtype=np.float32) - lo) / (hi - lo)


def normalize_box(box, stats: NormStats | None = None) -> np.ndarray:
    stats = stats or NormStats()
    b = np.asarray(box, dtype=np.float64)
    xs, ys = b[..., [0, 2]], b[..., [1, 3]]
    if (np.any(xs < 0) or np.any(xs > stats.image_width)
            or np.any(ys < 0) or np.any(ys > stats.image_height)):
        raise ValueError(f"box {b.tolist()} outside image bounds "
                         f"{stats.image_width:g}x{stats.image_height:g}")
    out = b.copy()
    out[..., [0, 2]] = xs / stats.image_width
    out[..., [1, 3]] = ys / stats.image_height
    return out


def denormalize_box(box, stats: NormStats | None = None) -> np.ndarray:
    stats = stats or NormStats()
    out = np.array(box, dtype=np.float64)
    out[..., [0, 2]] *= stats.image_width
    out[..., [1, 3]] *= stats.image_height
    return out


def normalize_pose(pose, stats: NormStats | None = None) -> np.ndarray:
    stats = stats or NormStats()
    p = np.asarray(pose, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("negative keypoint coordinate")
    out = p.copy()
    out[..., 0::2] = p[..., 0::2] / stats.image_width
    out[..., 1::2] = p[..., 1::2] / stats.image_height
    # 0 marks a missing keypoint; keep present ones nonzero even after a float32 cast
    tiny = np.finfo(np.float32).tiny
    return np.where((p > 0) & (out < tiny), tiny, out)


def zscore_speed(v, stats: NormStats):
    if stats.speed_std is None or stats.speed_mean is None:
        raise ValueError("NormStats carry no speed statistics")
    if stats.speed_std <= 0:
        raise ValueError("speed_std must be > 0")
    return (np.asarray(v, dtype=np.float64) - stats.speed_mean) / stats.speed_std


@dataclass
class FeatureBundle:
    mask: FeatureMask
    label: int
    video_stack: np.ndarray | None = None  # (N*C/2, H, W) float32 in [0, 1]
    box_seq: np.ndarray | None = None  # (N, 4)
    pose_seq: np.ndarray | None = None  # (N, 36)
    speed_seq: np.ndarray | None = None  # (N, 1)


def assemble_bundle(window: ObservationWindow, stats: NormStats, mask: FeatureMask,
                    frames=None, config: PreprocessConfig | None = None) -> FeatureBundle:
    """Preprocess one window; inputs switched off by ``mask`` are omitted entirely."""
    cfg = config or PreprocessConfig()
    if len(window.frames) != cfg.obs_len:
        raise ValueError(f"window has {len(window.frames)} frames, expected {cfg.obs_len}")
    bundle = FeatureBundle(mask=mask, label=int(window.label))
    if mask.images:
        if frames is None:
            raise ValueError("images enabled but no frame source given")
        idx = subsample_frames(list(range(cfg.obs_len)), cfg.subsample_phase, cfg.obs_len)
        crops = [
            normalize_image(crop_resize_from(frames, window.video_id, int(window.frames[i]),
                                             window.boxes[i], (cfg.height, cfg.width)))
            for i in idx
        ]
        # (8, H, W, 3) -> (8, 3, H, W) -> (24, H, W), frame-major
        stack = np.stack(crops).transpose(0, 3, 1, 2).reshape(cfg.video_channels, cfg.height, cfg.width)
        bundle.video_stack = np.clip(stack, 0.0, 1.0).astype(np.float32)
    if mask.boxes:
        bundle.box_seq = normalize_box(window.boxes, stats).astype(np.float32)
    if mask.pose:
        bundle.pose_seq = normalize_pose(window.pose, stats).astype(np.float32)
    if mask.speed:
        if window.speed is None:
            raise ValueError(f"track {window.track_id!r} has no ego speed; mask the speed channel off")
        bundle.speed_seq = zscore_speed(window.speed, stats).astype(np.float32)[:, None]
    return bundle


_KEYS = (("video_stack", "video"), ("box_seq", "boxes"), ("pose_seq", "pose"), ("speed_seq", "speed"))


def collate(bundles: Sequence[FeatureBundle]) -> dict[str, torch.Tensor]:
    """Stack bundles into a batch dict with keys ``video``, ``boxes``, ``pose``, ``speed``, ``label``."""
    if not bundles:
        raise ValueError("empty batch")
    mask = bundles[0].mask
    batch: dict = {"mask": mask}
    for attr, key in _KEYS:
        arrays = [getattr(b, attr) for b in bundles]
        if arrays[0] is not None:
            batch[key] = torch.from_numpy(np.stack(arrays))
    batch["label"] = torch.tensor([b.label for b in bundles], dtype=torch.float32)
    return batch


class BundleCache:
    """Preprocessed windows held as stacked arrays for fast batching."""

    def __init__(self, windows: Sequence[ObservationWindow], stats: NormStats, mask: FeatureMask,
                 frames=None, config: PreprocessConfig | None = None):
        if not windows:
            raise ValueError("no windows to preprocess")
        self.mask = mask
        bundles = [assemble_bundle(w, stats, mask, frames, config) for w in windows]
        self.arrays: dict[str, np.ndarray] = {}
        for attr, key in _KEYS:
            if getattr(bundles[0], attr) is not None:
                self.arrays[key] = np.stack([getattr(b, attr) for b in bundles])
        self.labels = np.array([b.label for b in bundles], dtype=np.float32)

    def __len__(self):
        return len(self.labels)

    def select(self, mask: FeatureMask) -> "BundleCache":
        """View of this cache restricted to a narrower mask (no re-preprocessing)."""
        missing = [k for k, on in zip(("video", "boxes", "pose", "speed"), mask.as_tuple())
                   if on and k not in self.arrays]
        if missing:
            raise ValueError(f"cache lacks {missing} needed by mask {mask}")
        view = object.__new__(BundleCache)
        view.mask = mask
        view.arrays = {k: v for k, v in self.arrays.items()
                       if dict(zip(("video", "boxes", "pose", "speed"), mask.as_tuple()))[k]}
        view.labels = self.labels
        return view

    def batch(self, idx) -> dict:
        idx = np.asarray(idx)
        out: dict = {"mask": self.mask}
        for key, arr in self.arrays.items():
            out[key] = torch.from_numpy(arr[idx])
        out["label"] = torch.from_numpy(self.labels[idx])
        return out
