import numpy as np
import pytest
import torch
from torch import nn

from intformer.dataset import SignalSpec, extract_windows, generate_synthetic
from intformer.frames import SyntheticFrames
from intformer.model import IntFormer, IntFormerConfig
from intformer.preprocess import (FeatureMask, PreprocessConfig, assemble_bundle, collate,
                                  compute_norm_stats)
from intformer.seq_encoder import SeqEncoderConfig
from intformer.training import weighted_bce
from intformer.video_encoder import VideoEncoderConfig

SMALL_VIDEO = VideoEncoderConfig(height=16, width=16, stem_width=4, widths=(4, 8), blocks=(1, 1), out_dim=16)
SMALL_SEQ = SeqEncoderConfig(d_model=16, n_heads=2, ff_dim=32, out_dim=16)


def small_config(code="1111", **kw):
    return IntFormerConfig(video=SMALL_VIDEO, seq=SMALL_SEQ, fusion_hidden=8,
                           mask=FeatureMask.from_code(code), **kw)


def random_batch(b=4, mask=FeatureMask(), hw=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    batch = {"mask": mask, "label": (torch.rand(b, generator=g) > 0.5).float()}
    if mask.images:
        batch["video"] = torch.rand(b, 24, hw, hw, generator=g)
    if mask.boxes:
        batch["boxes"] = torch.rand(b, 16, 4, generator=g)
    if mask.pose:
        batch["pose"] = torch.rand(b, 16, 36, generator=g)
    if mask.speed:
        batch["speed"] = torch.randn(b, 16, 1, generator=g)
    return batch


def test_concat_head_width_default():
    torch.manual_seed(0)
    m = IntFormer().eval()
    assert m.head.fc1.in_features == 256
    v, s = torch.randn(128), torch.randn(128)
    assert m.fuse(v, s).shape == ()


def test_fuse_requires_an_input():
    m = IntFormer(small_config())
    with pytest.raises(ValueError):
        m.fuse(None, None)


def test_fusion_zero_first_layer_gives_bias():
    torch.manual_seed(0)
    m = IntFormer(small_config()).eval()
    nn.init.zeros_(m.head.fc1.weight)
    nn.init.zeros_(m.head.fc1.bias)
    with torch.no_grad():
        m.head.fc2.bias.fill_(0.37)
        out = m(random_batch(5))
    assert torch.allclose(out, torch.full((5,), 0.37))


def test_eval_dropout_identity_and_bitwise_stable():
    torch.manual_seed(0)
    m = IntFormer(small_config()).eval()
    batch = random_batch(4)
    with torch.no_grad():
        assert torch.equal(m(batch), m(batch))
    m.train()
    torch.manual_seed(1)
    a = m(batch)
    torch.manual_seed(2)
    assert not torch.equal(a, m(batch))  # dropout active in training


def test_luong_attention_weights():
    torch.manual_seed(0)
    m = IntFormer(small_config(fusion="luong_attention")).eval()
    v = torch.randn(3, 16)
    s = torch.randn(3, 16)
    w, _ = m.attention.weights(v, s)
    assert torch.allclose(w.sum(-1), torch.ones(3), atol=1e-6)
    with torch.no_grad():
        m.attention.score.weight.copy_(torch.eye(16))
    w, _ = m.attention.weights(s, s)
    assert torch.allclose(w, torch.full((3, 2), 0.5), atol=1e-6)
    assert m.fuse(v, s).shape == (3,)


def test_luong_attention_default_dims():
    torch.manual_seed(0)
    m = IntFormer(IntFormerConfig(fusion="luong_attention")).eval()
    assert m.fuse(torch.randn(128), torch.randn(128)).shape == ()


def test_luong_attention_needs_both_branches():
    with pytest.raises(ValueError, match="concat"):
        IntFormer(small_config("0001", fusion="luong_attention"))
    m = IntFormer(small_config(fusion="luong_attention"))
    with pytest.raises(ValueError, match="concat"):
        m.fuse(None, torch.randn(16))


def test_branch_variants():
    speed_only = IntFormer(small_config("0001"))
    assert speed_only.video is None and speed_only.seq is not None
    assert speed_only.head.fc1.in_features == 16
    out = speed_only.eval()(random_batch(2, FeatureMask.from_code("0001")))
    assert torch.all(torch.isfinite(out))
    images_only = IntFormer(small_config("1000"))
    assert images_only.seq is None and images_only.video is not None
    assert images_only.eval()(random_batch(2, FeatureMask.from_code("1000"))).shape == (2,)


def test_full_mask_batch_of_eight():
    torch.manual_seed(0)
    m = IntFormer(small_config()).eval()
    assert m(random_batch(8)).shape == (8,)
    assert torch.all((torch.sigmoid(m(random_batch(8))) > 0) & (torch.sigmoid(m(random_batch(8))) < 1))


def test_mask_mismatch():
    m = IntFormer(small_config("0101"))
    with pytest.raises(ValueError, match="does not match"):
        m(random_batch(2, FeatureMask.from_code("0001")))


def test_config_validation():
    with pytest.raises(ValueError):
        IntFormerConfig(dropout=1.0)
    with pytest.raises(ValueError):
        IntFormerConfig(fusion="sum")
    assert IntFormerConfig.from_dict(small_config().to_dict()) == small_config()


def test_single_bundle_forward():
    spec = SignalSpec(images=1.0)
    tracks = generate_synthetic(2, spec, seed=0)
    frames = SyntheticFrames(tracks, spec, seed=0)
    w = extract_windows(tracks[0], stride=20)[0]
    stats = compute_norm_stats([w])
    b = assemble_bundle(w, stats, FeatureMask(), frames, PreprocessConfig(height=16, width=16))
    torch.manual_seed(0)
    m = IntFormer(small_config()).eval()
    with torch.no_grad():
        single = m(b)
        batched = m(collate([b, b]))
    assert single.shape == ()
    assert torch.allclose(batched, single.expand(2), atol=1e-6)


def test_masked_images_cannot_change_logit():
    spec = SignalSpec(images=1.0)
    tracks = generate_synthetic(2, spec, seed=0)
    w = extract_windows(tracks[0], stride=20)[0]
    stats = compute_norm_stats([w])
    mask = FeatureMask(images=False)
    torch.manual_seed(0)
    m = IntFormer(small_config(mask.code)).eval()
    logits = []
    for seed in (1, 2):
        frames = SyntheticFrames(tracks, SignalSpec(images=1.0), seed=seed)  # different pixels
        b = assemble_bundle(w, stats, mask, frames)
        with torch.no_grad():
            logits.append(m(b))
    assert torch.equal(logits[0], logits[1])


def test_end_to_end_gradients_float64():
    torch.manual_seed(0)
    m = IntFormer(small_config()).double().eval()
    batch = random_batch(3)
    for k in ("video", "boxes", "pose", "speed", "label"):
        batch[k] = batch[k].double()

    def loss_fn():
        return weighted_bce(m(batch), batch["label"], 2.5)

    m.zero_grad()
    loss_fn().backward()
    named = [(n, p) for n, p in m.named_parameters()]
    rng = np.random.default_rng(0)
    # at least one coordinate from every block, then random fill up to 25
    blocks = ["video.stem", "video.stages", "video.head", "seq.input_proj", "seq.layers",
              "seq.norm", "seq.out", "head.fc1", "head.fc2"]
    picks = []
    for prefix in blocks:
        cands = [i for i, (n, _) in enumerate(named) if n.startswith(prefix)]
        picks.append(cands[rng.integers(len(cands))])
    picks += list(rng.integers(len(named), size=25 - len(picks)))
    eps = 1e-6
    checked = 0
    for pi in picks:
        name, p = named[pi]
        flat = p.data.view(-1)
        j = int(rng.integers(flat.numel()))
        if name.endswith("offsets"):
            frac = flat[j].item() - np.floor(flat[j].item())
            if min(frac, 1 - frac) < 1e-4:
                continue
        analytic = p.grad.view(-1)[j].item()
        old = flat[j].item()
        with torch.no_grad():
            flat[j] = old + eps
            hi = loss_fn().item()
            flat[j] = old - eps
            lo = loss_fn().item()
            flat[j] = old
        numeric = (hi - lo) / (2 * eps)
        assert abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric)) + 1e-8, (name, j)
        checked += 1
    assert checked >= 24


def test_images_masked_model_ignores_video_tensor():
    mask = FeatureMask(images=False)
    torch.manual_seed(0)
    m = IntFormer(small_config(mask.code)).eval()
    batch = random_batch(3, mask)
    outs = []
    for seed in (0, 1):
        batch["video"] = torch.rand(3, 24, 16, 16, generator=torch.Generator().manual_seed(seed))
        with torch.no_grad():
            outs.append(m(batch))
    assert torch.equal(outs[0], outs[1])
