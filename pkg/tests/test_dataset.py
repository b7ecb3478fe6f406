import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intformer.dataset import (AnnotationError, ConfigurationError, ObservationWindow, SignalSpec,
                               ValidationError, class_counts, class_weight_fraction,
                               compute_class_weight, extract_windows, generate_synthetic,
                               load_annotations, save_annotations, speed_slope, split_by_video,
                               SPEED_SLOPE_THRESHOLD)

from conftest import make_track


def brute_force_windows(first, last, event, obs_len=16, tte_min=30, tte_max=60, stride=1):
    """Every start placement, checked directly; then every stride-th from the earliest."""
    starts = []
    for s in range(first, last + 1):
        end = s + obs_len - 1
        if end > last:
            continue
        tte = event - end
        if tte_min <= tte <= tte_max:
            starts.append((s, tte))
    return starts[::stride]


def _windows(n):
    return [ObservationWindow("t", "v", 0, np.arange(16), np.zeros((16, 4)), np.zeros((16, 36)),
                              None, 30, int(y)) for y in n]


# -- loading -----------------------------------------------------------------

def test_load_single_valid_track(tmp_path, track_factory):
    path = tmp_path / "a.jsonl"
    save_annotations([track_factory(80)], path)
    tracks = load_annotations(path)
    assert len(tracks) == 1
    assert len(tracks[0]) == 80


def test_degenerate_box_rejected(track_factory):
    t = track_factory(20)
    t.boxes[3, 2] = t.boxes[3, 0]
    with pytest.raises(ValidationError, match="box degenerate"):
        t.validate()


def test_invalid_track_dropped_with_diagnostic(tmp_path, track_factory):
    good1 = track_factory(50, track_id="a", video_id="v1")
    good2 = track_factory(50, track_id="b", video_id="v2")
    bad = track_factory(50, track_id="c", video_id="v3")
    rec = bad.to_record()
    rec["event_frame"] = 500
    path = tmp_path / "a.jsonl"
    save_annotations([good1, good2], path)
    with open(path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")
    tracks, diags = load_annotations(path, return_diagnostics=True)
    assert [t.track_id for t in tracks] == ["a", "b"]
    assert len(diags) == 1
    assert diags[0].track_id == "c"
    assert "event_frame" in diags[0].rule


def test_malformed_line_names_line_number(tmp_path, track_factory):
    path = tmp_path / "a.jsonl"
    save_annotations([track_factory(20)], path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(AnnotationError, match=":2:"):
        load_annotations(path)


def test_missing_field_and_schema_version(tmp_path, track_factory):
    rec = track_factory(20).to_record()
    del rec["label"]
    path = tmp_path / "a.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="missing fields"):
        load_annotations(path)
    rec = track_factory(20).to_record()
    rec["schema_version"] = 99
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="schema_version"):
        load_annotations(path)


def test_roundtrip_preserves_absent_speed(tmp_path, track_factory):
    t = track_factory(30, speed=False)
    path = tmp_path / "a.jsonl"
    save_annotations([t], path)
    (back,) = load_annotations(path)
    assert back.ego_speed is None
    np.testing.assert_array_equal(back.boxes, t.boxes)


def test_pose_zeros_allowed_negative_rejected(track_factory):
    t = track_factory(20)
    t.pose[0, :] = 0.0
    t.validate()
    t.pose[1, 3] = -1.0
    with pytest.raises(ValidationError, match="pose"):
        t.validate()


def test_non_consecutive_frames_rejected(track_factory):
    t = track_factory(20)
    t.frames[5:] += 1
    t.event_frame = int(t.frames[-1])
    with pytest.raises(ValidationError, match="consecutive"):
        t.validate()


# -- windows -----------------------------------------------------------------

def test_hundred_frame_track_gives_31_windows(track_factory):
    t = track_factory(100, event=99)
    ws = extract_windows(t, stride=1)
    assert [w.last_frame for w in ws] == list(range(39, 70))
    assert len(ws) == 31
    assert brute_force_windows(0, 99, 99) == [(w.start_frame, w.tte) for w in ws]


def test_short_track_gives_no_windows(track_factory):
    t = track_factory(45, event=44)
    assert extract_windows(t) == []
    assert brute_force_windows(0, 44, 44) == []


def test_stride_covering_range_gives_one_window(track_factory):
    t = track_factory(100, event=99)
    assert len(extract_windows(t, stride=31)) == 1


def test_windows_inherit_label_and_slices(track_factory):
    t = track_factory(100, start=10, label=0)
    for w in extract_windows(t, stride=7):
        assert w.label == 0
        assert len(w.frames) == 16
        i = w.start_frame - 10
        np.testing.assert_array_equal(w.boxes, t.boxes[i:i + 16])
        np.testing.assert_array_equal(w.speed, t.ego_speed[i:i + 16])


def test_bad_stride():
    with pytest.raises(ValueError):
        extract_windows(make_track(100), stride=0)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 130), start=st.integers(0, 50), event_off=st.integers(0, 129),
       stride=st.integers(1, 40))
def test_windows_match_brute_force(n, start, event_off, stride):
    event = start + min(event_off, n - 1)
    t = make_track(n, start=start, event=event)
    ws = extract_windows(t, stride=stride)
    assert [(w.start_frame, w.tte) for w in ws] == brute_force_windows(start, start + n - 1, event,
                                                                        stride=stride)
    assert all(30 <= w.tte <= 60 and len(w.frames) == 16 for w in ws)


# -- class weight ------------------------------------------------------------

@pytest.mark.parametrize("n_nc,n_c,expected", [(50, 50, 1.0), (100, 25, 4.0)])
def test_class_weight(n_nc, n_c, expected):
    assert compute_class_weight(_windows([0] * n_nc + [1] * n_c)) == expected


def test_class_weight_no_positives():
    with pytest.raises(ConfigurationError):
        compute_class_weight(_windows([0] * 10))


@given(st.integers(0, 500), st.integers(1, 500))
def test_class_weight_rational_identity(n_nc, n_c):
    w = class_weight_fraction([0] * n_nc + [1] * n_c)
    assert w * n_c == n_nc
    assert isinstance(w, Fraction)


# -- splitting ---------------------------------------------------------------

def _tracks_in_videos(n_videos, per_video=2):
    return [make_track(100, track_id=f"t{v}_{k}", video_id=f"v{v}", seed=v * 10 + k)
            for v in range(n_videos) for k in range(per_video)]


def test_split_deterministic():
    tracks = _tracks_in_videos(10)
    a = split_by_video(tracks, (0.8, 0.1, 0.1), seed=7)
    b = split_by_video(tracks, (0.8, 0.1, 0.1), seed=7)
    assert a.videos == b.videos
    assert [w.start_frame for w in a.train] == [w.start_frame for w in b.train]
    assert [len(a.videos[k]) for k in ("train", "val", "test")] == [8, 1, 1]


def test_split_three_videos_one_each():
    s = split_by_video(_tracks_in_videos(3), (1 / 3, 1 / 3, 1 / 3), seed=0)
    assert sorted(len(v) for v in s.videos.values()) == [1, 1, 1]


def test_split_too_few_videos():
    with pytest.raises(ValueError, match="at least 3 videos"):
        split_by_video(_tracks_in_videos(2), (0.8, 0.1, 0.1))


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split_by_video(_tracks_in_videos(5), (0.5, 0.5, 0.1))


@settings(max_examples=50, deadline=None)
@given(n_videos=st.integers(3, 25), seed=st.integers(0, 10_000),
       r=st.tuples(st.floats(0.05, 1), st.floats(0.05, 1), st.floats(0.05, 1)))
def test_split_is_partition(n_videos, seed, r):
    total = sum(r)
    ratios = (r[0] / total, r[1] / total, 1 - r[0] / total - r[1] / total)
    tracks = [make_track(80, track_id=f"t{i}", video_id=f"v{i % n_videos}", seed=i)
              for i in range(n_videos * 2)]
    s = split_by_video(tracks, ratios, seed=seed)
    parts = [set(s.videos[k]) for k in ("train", "val", "test")]
    assert all(parts)
    assert set.union(*parts) == {t.video_id for t in tracks}
    assert sum(len(p) for p in parts) == n_videos
    for name, windows in s.partitions().items():
        assert {w.video_id for w in windows} <= set(s.videos[name])


# -- synthetic ---------------------------------------------------------------

def test_synthetic_speed_signal_recoverable():
    tracks = generate_synthetic(20, SignalSpec(speed=1.0), seed=1)
    assert len(tracks) == 20
    for t in tracks:
        t.validate()
    # the generator's own rule: crossing tracks decelerate below the slope threshold
    pred = [int(speed_slope(t.ego_speed) < SPEED_SLOPE_THRESHOLD) for t in tracks]
    acc = np.mean(np.array(pred) == np.array([t.label for t in tracks]))
    assert acc >= 0.95


def test_synthetic_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_annotations(generate_synthetic(15, SignalSpec(boxes=0.5), seed=4), a)
    save_annotations(generate_synthetic(15, SignalSpec(boxes=0.5), seed=4), b)
    assert a.read_bytes() == b.read_bytes()


def test_synthetic_imbalance_gives_class_weight_four():
    tracks = generate_synthetic(100, SignalSpec(imbalance=4.0), seed=2)
    assert class_counts(tracks) == (80, 20)
    assert compute_class_weight(tracks) == 4.0


def test_synthetic_without_speed():
    tracks = generate_synthetic(5, SignalSpec(with_speed=False), seed=0)
    assert all(t.ego_speed is None for t in tracks)


def test_signal_spec_validation():
    with pytest.raises(ValueError):
        SignalSpec(speed=1.5)
    with pytest.raises(ValueError):
        SignalSpec(imbalance=0)
