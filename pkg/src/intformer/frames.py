"""Image frame sources addressed by (video_id, frame_index).

On disk, frames live under ``<root>/<video_id>/<frame_index:06d>.png``.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
from PIL import Image

from .dataset import IMAGE_HEIGHT, IMAGE_WIDTH, SignalSpec, TrackAnnotation

FRAMES_ENV = "INTFORMER_FRAMES"
FRAME_PATTERN = "{frame:06d}.png"


class FrameNotFoundError(LookupError):
    def __init__(self, video_id: str, frame_index: int, detail: str = ""):
        msg = f"cannot resolve frame (video_id={video_id!r}, frame_index={frame_index})"
        super().__init__(msg + (f": {detail}" if detail else ""))
        self.video_id = video_id
        self.frame_index = frame_index


class FrameSource(Protocol):
    def region(self, video_id: str, frame_index: int, rows: tuple[int, int],
               cols: tuple[int, int]) -> np.ndarray:
        """uint8 array of shape (r1 - r0, c1 - c0, 3)."""
        ...


class DirectoryFrames:
    def __init__(self, root=None, pattern: str = FRAME_PATTERN):
        root = root if root is not None else os.environ.get(FRAMES_ENV)
        if root is None:
            raise ValueError(f"no frames root given and ${FRAMES_ENV} is unset")
        self.root = Path(root)
        self.pattern = pattern

    def path(self, video_id: str, frame_index: int) -> Path:
        return self.root / video_id / self.pattern.format(frame=int(frame_index))

    def load(self, video_id: str, frame_index: int) -> np.ndarray:
        p = self.path(video_id, frame_index)
        try:
            with Image.open(p) as im:
                return np.asarray(im.convert("RGB"))
        except (FileNotFoundError, OSError) as exc:
            raise FrameNotFoundError(video_id, frame_index, str(p)) from exc

    def region(self, video_id, frame_index, rows, cols):
        return self.load(video_id, frame_index)[rows[0]:rows[1], cols[0]:cols[1]]


class SyntheticFrames:
    """Procedural frames for synthetic tracks, rendered only where requested.

    Background is per-video block noise; each pedestrian is a bright figure inside its
    box. For crossing tracks the figure sways horizontally with amplitude proportional
    to ``spec.images``, giving the image branch a temporal cue.
    """

    BLOCK = 24

    def __init__(self, tracks: Iterable[TrackAnnotation], spec: SignalSpec | None = None,
                 seed: int = 0):
        self.spec = spec or SignalSpec()
        self.seed = int(seed)
        self._by_video: dict[str, list[TrackAnnotation]] = {}
        for t in tracks:
            self._by_video.setdefault(t.video_id, []).append(t)
        self._grids: dict[str, np.ndarray] = {}

    def _grid(self, video_id: str) -> np.ndarray:
        g = self._grids.get(video_id)
        if g is None:
            key = [self.seed] + [ord(c) for c in video_id]
            rng = np.random.default_rng(key)
            shape = (IMAGE_HEIGHT // self.BLOCK + 1, IMAGE_WIDTH // self.BLOCK + 1, 3)
            g = rng.integers(30, 131, size=shape).astype(np.uint8)
            self._grids[video_id] = g
        return g

    def _figure(self, track: TrackAnnotation, frame_index: int):
        i = frame_index - int(track.frames[0])
        x1, y1, x2, y2 = track.boxes[i]
        w, h = x2 - x1, y2 - y1
        offset = 0.0
        if track.label == 1 and self.spec.images > 0:
            offset = self.spec.images * 0.25 * w * np.sin(2 * np.pi * frame_index / 16.0)
        cx = (x1 + x2) / 2 + offset
        return cx - 0.2 * w, y1 + 0.1 * h, cx + 0.2 * w, y2 - 0.1 * h

    def region(self, video_id, frame_index, rows, cols):
        if video_id not in self._by_video:
            raise FrameNotFoundError(video_id, frame_index, "unknown video")
        r0, r1 = rows
        c0, c1 = cols
        ys = np.arange(r0, r1)
        xs = np.arange(c0, c1)
        out = self._grid(video_id)[ys[:, None] // self.BLOCK, xs[None, :] // self.BLOCK].copy()
        for track in self._by_video[video_id]:
            if not track.frames[0] <= frame_index <= track.frames[-1]:
                continue
            fx1, fy1, fx2, fy2 = self._figure(track, frame_index)
            inside = ((ys[:, None] >= fy1) & (ys[:, None] < fy2)
                      & (xs[None, :] >= fx1) & (xs[None, :] < fx2))
            out[inside] = (220, 200, 180)
        return out

    def load(self, video_id: str, frame_index: int) -> np.ndarray:
        return self.region(video_id, frame_index, (0, IMAGE_HEIGHT), (0, IMAGE_WIDTH))


def write_frames(source, tracks: Iterable[TrackAnnotation], root, frames_per_track=None,
                 compress_level: int = 1) -> int:
    """Render full frames from ``source`` into the on-disk layout; returns the file count.

    ``frames_per_track`` maps track_id to the frame indices to write (default: all).
    """
    root = Path(root)
    written = set()
    for t in tracks:
        wanted = t.frames if frames_per_track is None else frames_per_track.get(t.track_id, ())
        vdir = root / t.video_id
        vdir.mkdir(parents=True, exist_ok=True)
        for f in wanted:
            key = (t.video_id, int(f))
            if key in written:
                continue
            img = source.load(t.video_id, int(f))
            Image.fromarray(img).save(vdir / FRAME_PATTERN.format(frame=int(f)),
                                      compress_level=compress_level)
            written.add(key)
    return len(written)
