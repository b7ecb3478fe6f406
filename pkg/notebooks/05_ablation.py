"""
Which inputs matter
===================

Train one model per feature combination under identical settings and compare.
The synthetic data carries signal in speed (strong), boxes and images
(moderate) and none in pose, so the ranking should follow that.
A reduced sweep over five masks and one seed keeps this quick; the acceptance
suite runs all 15 combinations over three seeds.
"""

# %%
from intformer.dataset import SignalSpec, generate_synthetic, split_by_video
from intformer.evaluation import ablation_run, summarize
from intformer.frames import SyntheticFrames
from intformer.model import IntFormerConfig
from intformer.preprocess import FeatureMask, PreprocessConfig
from intformer.seq_encoder import SeqEncoderConfig
from intformer.training import TrainConfig
from intformer.video_encoder import VideoEncoderConfig

spec = SignalSpec(speed=1.0, boxes=0.5, images=0.5, pose=0.0)
tracks = generate_synthetic(40, spec, seed=11)
split = split_by_video(tracks, (0.5, 0.1, 0.4), seed=0, stride=3)

small = IntFormerConfig(
    video=VideoEncoderConfig(height=16, width=16, stem_width=8, widths=(8, 16), blocks=(1, 1), out_dim=32),
    seq=SeqEncoderConfig(d_model=32, n_heads=4, ff_dim=64, out_dim=32), fusion_hidden=32)

# %%
masks = [FeatureMask.from_code(c) for c in ("1000", "0100", "0010", "0001", "1101")]
rows = ablation_run(small, split, masks, seeds=(0,),
                    train_config=TrainConfig.from_profile("synthetic", epochs=10),
                    frames=SyntheticFrames(tracks, spec, seed=11),
                    preprocess=PreprocessConfig(height=16, width=16))

print("imgs bbs pose speed   acc   auc    f1")
for s in summarize(rows):
    flags = "   ".join(str(int(v)) for v in s["mask"].as_tuple())
    print(f"  {flags}   {s['acc_mean']:.3f} {s['auc_mean']:.3f} {s['f1_mean']:.3f}")
