"""
From a window to model inputs
=============================

Frames are subsampled to every other index, cropped to the pedestrian box,
resized to 112x112 and stacked along channels. Boxes and pose are scaled by
the image size, speed is z-scored with training statistics.
"""

# %%
import numpy as np

from intformer.dataset import SignalSpec, extract_windows, generate_synthetic
from intformer.frames import SyntheticFrames
from intformer.preprocess import FeatureMask, assemble_bundle, collate, compute_norm_stats

spec = SignalSpec(speed=1.0, images=1.0)
tracks = generate_synthetic(4, spec, seed=1)
frames = SyntheticFrames(tracks, spec, seed=1)
windows = [w for t in tracks for w in extract_windows(t, stride=20)]
stats = compute_norm_stats(windows)
print(stats)

# %%
b = assemble_bundle(windows[0], stats, FeatureMask(), frames)
print("video", b.video_stack.shape, "range", float(b.video_stack.min()), float(b.video_stack.max()))
print("boxes", b.box_seq.shape, "pose", b.pose_seq.shape, "speed", b.speed_seq.shape)
print("first box, normalised:", np.round(b.box_seq[0], 3))

# %%
# Masked channels are left out entirely rather than zero-filled.
mask = FeatureMask.parse("bbs+speed")
b2 = assemble_bundle(windows[0], stats, mask, frames)
print(mask.code, "video is", b2.video_stack, "| pose is", b2.pose_seq)

batch = collate([assemble_bundle(w, stats, mask, frames) for w in windows[:3]])
print({k: tuple(v.shape) for k, v in batch.items() if hasattr(v, "shape")})
