import numpy as np
import pytest
import torch

from intformer.dataset import TrackAnnotation


def make_track(n_frames=80, start=0, event=None, label=1, track_id="t0", video_id="v0",
               speed=True, seed=0):
    rng = np.random.default_rng(seed)
    frames = np.arange(start, start + n_frames)
    x1 = rng.uniform(100, 1500, size=n_frames)
    y1 = rng.uniform(100, 800, size=n_frames)
    boxes = np.stack([x1, y1, x1 + 60, y1 + 150], axis=1)
    pose = rng.uniform(0, 1000, size=(n_frames, 36))
    return TrackAnnotation(
        track_id=track_id, video_id=video_id, frames=frames, boxes=boxes, pose=pose,
        ego_speed=rng.uniform(0, 50, size=n_frames) if speed else None, label=label,
        event_frame=int(frames[-1]) if event is None else event,
    )


@pytest.fixture
def track_factory():
    return make_track


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield
