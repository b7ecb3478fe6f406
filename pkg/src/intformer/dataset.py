"""Track annotations, TTE-anchored observation windows, splits and synthetic data.

Annotation files are JSON lines, one pedestrian track per line::

    {"schema_version": 1, "track_id": "t0", "video_id": "v0",
     "frames": [0, 1, ...], "boxes": [[x1, y1, x2, y2], ...],
     "pose": [[36 floats], ...], "ego_speed": [km/h, ...] | null,
     "label": 0 | 1, "event_frame": 99}

PIE/JAAD native annotations must be converted to this layout beforehand.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
IMAGE_WIDTH = 1920
IMAGE_HEIGHT = 1080
POSE_DIM = 36


class AnnotationError(ValueError):
    """Raised for unparseable annotation records."""


class ValidationError(ValueError):
    """Raised when a track breaks one of the annotation invariants."""

    def __init__(self, track_id: str, rule: str):
        super().__init__(f"track {track_id!r}: {rule}")
        self.track_id = track_id
        self.rule = rule


class ConfigurationError(ValueError):
    pass


@dataclass
class TrackAnnotation:
    track_id: str
    video_id: str
    frames: np.ndarray  # (T,) int
    boxes: np.ndarray  # (T, 4) x1, y1, x2, y2 in pixels
    pose: np.ndarray  # (T, pose_dim) pixels, 0.0 = missing keypoint
    ego_speed: np.ndarray | None  # (T,) km/h, None when unavailable (JAAD)
    label: int
    event_frame: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.ndim == 1:
            self.pose = self.pose.reshape(len(self.frames), -1)
        if self.ego_speed is not None:
            self.ego_speed = np.asarray(self.ego_speed, dtype=np.float64)
        self.label = int(self.label)
        self.event_frame = int(self.event_frame)

    def __len__(self):
        return len(self.frames)

    def validate(self, pose_dim: int = POSE_DIM) -> None:
        n = len(self.frames)
        tid = self.track_id
        if n == 0:
            raise ValidationError(tid, "empty track")
        if n > 1 and not np.all(np.diff(self.frames) == 1):
            raise ValidationError(tid, "frames not consecutive")
        if self.boxes.shape != (n, 4):
            raise ValidationError(tid, f"boxes shape {self.boxes.shape}, expected ({n}, 4)")
        if self.pose.shape != (n, pose_dim):
            raise ValidationError(tid, f"pose shape {self.pose.shape}, expected ({n}, {pose_dim})")
        if self.ego_speed is not None and self.ego_speed.shape != (n,):
            raise ValidationError(tid, f"ego_speed length {self.ego_speed.shape}, expected {n}")
        x1, y1, x2, y2 = self.boxes.T
        if np.any(x1 >= x2) or np.any(y1 >= y2):
            raise ValidationError(tid, "box degenerate (need x1 < x2 and y1 < y2)")
        if (np.any(self.boxes[:, [0, 2]] < 0) or np.any(self.boxes[:, [0, 2]] > IMAGE_WIDTH)
                or np.any(self.boxes[:, [1, 3]] < 0) or np.any(self.boxes[:, [1, 3]] > IMAGE_HEIGHT)):
            raise ValidationError(tid, "box outside image bounds")
        if not np.all(np.isfinite(self.pose)) or np.any(self.pose < 0):
            raise ValidationError(tid, "pose values must be finite and >= 0")
        if self.ego_speed is not None and not np.all(np.isfinite(self.ego_speed)):
            raise ValidationError(tid, "ego_speed not finite")
        if self.label not in (0, 1):
            raise ValidationError(tid, f"label {self.label} not in {{0, 1}}")
        if self.event_frame < self.frames[0] or self.event_frame > self.frames[-1]:
            raise ValidationError(tid, "event_frame outside frames")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "track_id": self.track_id,
            "video_id": self.video_id,
            "frames": self.frames.tolist(),
            "boxes": self.boxes.tolist(),
            "pose": self.pose.tolist(),
            "ego_speed": None if self.ego_speed is None else self.ego_speed.tolist(),
            "label": self.label,
            "event_frame": self.event_frame,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrackAnnotation":
        return cls(
            track_id=str(rec["track_id"]),
            video_id=str(rec["video_id"]),
            frames=rec["frames"],
            boxes=rec["boxes"],
            pose=rec["pose"],
            ego_speed=rec["ego_speed"],
            label=rec["label"],
            event_frame=rec["event_frame"],
        )


@dataclass
class ObservationWindow:
    track_id: str
    video_id: str
    start_frame: int
    frames: np.ndarray  # (obs_len,) absolute frame indices; image reference is (video_id, frame)
    boxes: np.ndarray  # (obs_len, 4)
    pose: np.ndarray  # (obs_len, pose_dim)
    speed: np.ndarray | None  # (obs_len,)
    tte: int
    label: int

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])


@dataclass
class DatasetSplit:
    train: list[ObservationWindow] = field(default_factory=list)
    val: list[ObservationWindow] = field(default_factory=list)
    test: list[ObservationWindow] = field(default_factory=list)
    videos: dict[str, list[str]] = field(default_factory=dict)

    def partitions(self) -> dict[str, list[ObservationWindow]]:
        return {"train": self.train, "val": self.val, "test": self.test}


# ---------------------------------------------------------------------------
# ingestion

_REQUIRED = ("schema_version", "track_id", "video_id", "frames", "boxes", "pose",
             "ego_speed", "label", "event_frame")


def load_annotations(path, pose_dim: int = POSE_DIM, return_diagnostics: bool = False):
    """Read a JSON-lines annotation file.

    Malformed lines raise :class:`AnnotationError` with the line number. Tracks that
    parse but break an invariant are dropped and reported as diagnostics (a list of
    :class:`ValidationError`), returned alongside the tracks when
    ``return_diagnostics`` is set.
    """
    tracks: list[TrackAnnotation] = []
    diagnostics: list[ValidationError] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise AnnotationError(f"{path}:{lineno}: record is not an object")
            missing = [k for k in _REQUIRED if k not in rec]
            if missing:
                raise AnnotationError(f"{path}:{lineno}: missing fields {missing}")
            if rec["schema_version"] != SCHEMA_VERSION:
                raise AnnotationError(
                    f"{path}:{lineno}: schema_version {rec['schema_version']} unsupported "
                    f"(expected {SCHEMA_VERSION})")
            try:
                track = TrackAnnotation.from_record(rec)
            except (TypeError, ValueError) as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from exc
            try:
                track.validate(pose_dim)
            except ValidationError as err:
                logger.warning("rejected %s", err)
                diagnostics.append(err)
                continue
            tracks.append(track)
    if return_diagnostics:
        return tracks, diagnostics
    return tracks


def save_annotations(tracks: Iterable[TrackAnnotation], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tracks:
            fh.write(json.dumps(t.to_record(), separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# windows

def extract_windows(track: TrackAnnotation, obs_len: int = 16, tte_min: int = 30,
                    tte_max: int = 60, stride: int = 1) -> list[ObservationWindow]:
    """All ``obs_len``-frame windows whose last frame sits tte_min..tte_max frames before the event.

    Starts are stepped by ``stride`` from the earliest feasible start.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if obs_len < 1 or tte_min < 0 or tte_max < tte_min:
        raise ValueError("need obs_len >= 1 and 0 <= tte_min <= tte_max")
    first = int(track.frames[0])
    event = track.event_frame
    # last frame f = s + obs_len - 1 must satisfy tte_min <= event - f <= tte_max
    s_lo = max(first, event - tte_max - obs_len + 1)
    s_hi = event - tte_min - obs_len + 1
    windows = []
    for s in range(s_lo, s_hi + 1, stride):
        i = s - first
        sl = slice(i, i + obs_len)
        windows.append(ObservationWindow(
            track_id=track.track_id,
            video_id=track.video_id,
            start_frame=s,
            frames=track.frames[sl].copy(),
            boxes=track.boxes[sl].copy(),
            pose=track.pose[sl].copy(),
            speed=None if track.ego_speed is None else track.ego_speed[sl].copy(),
            tte=event - (s + obs_len - 1),
            label=track.label,
        ))
    return windows


def class_counts(items) -> tuple[int, int]:
    """(non-crossing, crossing) counts over windows, tracks or raw labels."""
    labels = [getattr(w, "label", w) for w in items]
    n_pos = sum(1 for y in labels if int(y) == 1)
    return len(labels) - n_pos, n_pos


def class_weight_fraction(train_windows) -> Fraction:
    m_nc, m_c = class_counts(train_windows)
    if m_c == 0:
        raise ConfigurationError("no crossing samples in the training set; class weight undefined")
    return Fraction(m_nc, m_c)


def compute_class_weight(train_windows) -> float:
    """Positive-class weight: non-crossing count over crossing count, training partition only."""
    return float(class_weight_fraction(train_windows))


def split_by_video(tracks: Sequence[TrackAnnotation], ratios=(0.8, 0.1, 0.1), seed: int = 0,
                   obs_len: int = 16, tte_min: int = 30, tte_max: int = 60,
                   stride: int = 1) -> DatasetSplit:
    """Assign whole videos to train/val/test and extract their windows.

    Video counts per partition use largest remainders with at least one video each.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    videos = sorted({t.video_id for t in tracks})
    n = len(videos)
    if n < 3:
        raise ValueError(f"need at least 3 videos for 3 partitions, got {n}")

    raw = np.array(ratios) * n
    counts = np.maximum(np.floor(raw).astype(int), 1)
    while counts.sum() > n:
        # take from the partition with the largest surplus that can spare one
        surplus = np.where(counts > 1, counts - raw, -np.inf)
        counts[int(np.argmax(surplus))] -= 1
    while counts.sum() < n:
        counts[int(np.argmax(raw - counts))] += 1

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [videos[i] for i in order]
    names = ("train", "val", "test")
    assign: dict[str, str] = {}
    video_parts: dict[str, list[str]] = {}
    pos = 0
    for name, c in zip(names, counts):
        video_parts[name] = sorted(shuffled[pos:pos + c])
        for v in video_parts[name]:
            assign[v] = name
        pos += c

    split = DatasetSplit(videos=video_parts)
    parts = split.partitions()
    for t in tracks:
        parts[assign[t.video_id]].extend(extract_windows(t, obs_len, tte_min, tte_max, stride))
    return split


# ---------------------------------------------------------------------------
# synthetic data

@dataclass
class SignalSpec:
    """Which channels carry label-correlated signal and how strongly.

    Strengths are in [0, 1]; 0 makes the channel's distribution label-independent.
    ``imbalance`` is the non-crossing : crossing ratio.
    """
    speed: float = 1.0
    boxes: float = 0.0
    images: float = 0.0
    pose: float = 0.0
    imbalance: float = 1.0
    min_frames: int = 80
    max_frames: int = 110
    tracks_per_video: int = 1
    speed_noise: float = 0.3
    pose_missing_rate: float = 0.1
    with_speed: bool = True

    def __post_init__(self):
        for name in ("speed", "boxes", "images", "pose"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"signal strength {name}={v} outside [0, 1]")
        if self.imbalance <= 0:
            raise ValueError("imbalance must be positive")
        if self.min_frames < 2 or self.max_frames < self.min_frames:
            raise ValueError("need 2 <= min_frames <= max_frames")
        if self.tracks_per_video < 1:
            raise ValueError("tracks_per_video must be >= 1")


# threshold rule the generator plants in the speed channel (km/h per frame)
SPEED_SLOPE_THRESHOLD = -0.05


def _labels_for(n_tracks: int, imbalance: float, rng: np.random.Generator) -> np.ndarray:
    n_pos = int(round(n_tracks / (1.0 + imbalance)))
    n_pos = min(max(n_pos, 1 if n_tracks > 1 else 0), n_tracks)
    labels = np.zeros(n_tracks, dtype=int)
    labels[:n_pos] = 1
    return rng.permutation(labels)


def _speed_trace(n: int, crossing: bool, strength: float, noise: float,
                 rng: np.random.Generator) -> np.ndarray:
    v0 = rng.uniform(30.0, 50.0)
    t = np.arange(n, dtype=np.float64)
    if crossing and strength > 0:
        # decelerating towards the crossing
        slope = -strength * rng.uniform(0.12, 0.25)
    else:
        slope = rng.normal(0.0, 0.01)
    v = v0 + slope * t + rng.normal(0.0, noise, size=n)
    return np.clip(v, 0.0, None)


def _box_track(n: int, crossing: bool, strength: float, rng: np.random.Generator) -> np.ndarray:
    h0 = rng.uniform(120.0, 260.0)
    w0 = h0 * rng.uniform(0.35, 0.5)
    side = rng.choice([-1.0, 1.0])
    cx0 = IMAGE_WIDTH / 2 + side * rng.uniform(350.0, 800.0)
    cy0 = rng.uniform(500.0, 700.0)
    t = np.arange(n, dtype=np.float64)
    speed = rng.uniform(1.0, 3.0)
    if crossing:
        # drift toward the image centre
        vx = -side * speed * strength
    else:
        vx = rng.normal(0.0, 0.3) + side * speed * strength * 0.3
    cx = cx0 + vx * t + rng.normal(0.0, 1.0, size=n)
    scale = 1.0 + 0.004 * t
    h = h0 * scale
    w = w0 * scale
    cy = cy0 + 0.2 * t
    x1 = np.clip(cx - w / 2, 0.0, IMAGE_WIDTH - 8)
    x2 = np.clip(cx + w / 2, x1 + 8, IMAGE_WIDTH)
    y1 = np.clip(cy - h / 2, 0.0, IMAGE_HEIGHT - 8)
    y2 = np.clip(cy + h / 2, y1 + 8, IMAGE_HEIGHT)
    return np.stack([x1, y1, x2, y2], axis=1)


# keypoint layout relative to the box, (u, v) in [0, 1]: a crude upright skeleton
_SKELETON = np.array([
    [0.50, 0.08], [0.50, 0.18], [0.35, 0.20], [0.30, 0.35], [0.28, 0.48],
    [0.65, 0.20], [0.70, 0.35], [0.72, 0.48], [0.40, 0.52], [0.40, 0.72],
    [0.40, 0.92], [0.60, 0.52], [0.60, 0.72], [0.60, 0.92], [0.46, 0.06],
    [0.54, 0.06], [0.42, 0.08], [0.58, 0.08],
])


def _pose_track(boxes: np.ndarray, crossing: bool, strength: float, missing_rate: float,
                rng: np.random.Generator) -> np.ndarray:
    n = len(boxes)
    w = (boxes[:, 2] - boxes[:, 0])[:, None]
    h = (boxes[:, 3] - boxes[:, 1])[:, None]
    u = _SKELETON[None, :, 0] + rng.normal(0.0, 0.03, size=(n, 18))
    v = _SKELETON[None, :, 1] + rng.normal(0.0, 0.03, size=(n, 18))
    if crossing and strength > 0:
        # legs spread as in a walking stance
        legs = [9, 10, 12, 13]
        spread = strength * 0.15 * np.sin(np.arange(n) * 2 * np.pi / 20.0)[:, None]
        u[:, legs] += spread * np.array([-1, -1, 1, 1])
    x = boxes[:, [0]] + u * w
    y = boxes[:, [1]] + v * h
    x = np.clip(x, 0.0, IMAGE_WIDTH)
    y = np.clip(y, 0.0, IMAGE_HEIGHT)
    pose = np.empty((n, 36))
    pose[:, 0::2] = x
    pose[:, 1::2] = y
    missing = rng.random((n, 18)) < missing_rate
    pose[:, 0::2][missing] = 0.0
    pose[:, 1::2][missing] = 0.0
    return pose


def generate_synthetic(n_tracks: int, signal_spec: SignalSpec | None = None,
                       seed: int = 0) -> list[TrackAnnotation]:
    """Deterministic planted-signal tracks satisfying every annotation invariant.

    Crossing tracks decelerate (speed), drift toward the image centre (boxes) and carry
    a walking-figure cue in the rendered frames (images), each scaled by its strength.
    Image content itself is produced by :class:`intformer.frames.SyntheticFrames`.
    """
    spec = signal_spec or SignalSpec()
    if n_tracks < 1:
        raise ValueError("n_tracks must be >= 1")
    rng = np.random.default_rng(seed)
    labels = _labels_for(n_tracks, spec.imbalance, rng)
    tracks = []
    for i in range(n_tracks):
        crossing = bool(labels[i])
        n = int(rng.integers(spec.min_frames, spec.max_frames + 1))
        start = int(rng.integers(0, 300))
        frames = np.arange(start, start + n)
        boxes = _box_track(n, crossing, spec.boxes, rng)
        pose = _pose_track(boxes, crossing, spec.pose, spec.pose_missing_rate, rng)
        speed = _speed_trace(n, crossing, spec.speed, spec.speed_noise, rng)
        track = TrackAnnotation(
            track_id=f"syn_{seed}_{i:05d}",
            video_id=f"video_{i // spec.tracks_per_video:05d}",
            frames=frames,
            boxes=boxes,
            pose=pose,
            ego_speed=speed if spec.with_speed else None,
            label=int(crossing),
            event_frame=int(frames[-1]),
        )
        track.validate()
        tracks.append(track)
    return tracks


def speed_slope(speed: np.ndarray) -> float:
    """Least-squares slope of a speed trace in km/h per frame."""
    t = np.arange(len(speed), dtype=np.float64)
    return float(np.polyfit(t, speed, 1)[0])
