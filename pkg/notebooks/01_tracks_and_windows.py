"""
Tracks, observation windows and the class weight
================================================

A track is one pedestrian's per-frame boxes, pose keypoints and ego speed,
plus a crossing label. Training samples are 16-frame windows that end 30 to 60
frames before the event.
"""

# %%
from intformer.dataset import (SignalSpec, class_counts, compute_class_weight, extract_windows,
                               generate_synthetic, speed_slope, split_by_video)

# 40 synthetic tracks, 4 non-crossing for every crossing one
spec = SignalSpec(speed=1.0, imbalance=4.0)
tracks = generate_synthetic(40, spec, seed=0)
print(len(tracks), "tracks, (non-crossing, crossing) =", class_counts(tracks))
print("W_c =", compute_class_weight(tracks))

# %%
# Every valid placement for one track. tte counts frames from the last observed
# frame to the event.
t = tracks[0]
ws = extract_windows(t)
print(f"track {t.track_id}: frames {t.frames[0]}..{t.frames[-1]}, event {t.event_frame}")
print(f"{len(ws)} windows, tte from {ws[-1].tte} to {ws[0].tte}")

# a stride thins the windows out, always keeping the earliest one
print("stride 10 ->", [(w.start_frame, w.tte) for w in extract_windows(t, stride=10)])

# %%
# The planted speed signal: crossing tracks decelerate.
for label in (0, 1):
    slopes = [speed_slope(w.speed) for tr in tracks if tr.label == label
              for w in extract_windows(tr, stride=10)]
    print(f"label {label}: mean window speed slope {sum(slopes) / len(slopes):+.3f}")

# %%
# Splits are drawn per video so no recording leaks across partitions.
split = split_by_video(tracks, (0.7, 0.15, 0.15), seed=0, stride=5)
for name, part in split.partitions().items():
    print(f"{name:5s} {len(part):4d} windows from {len(split.videos[name])} videos")
