"""
Training a speed-only model
===========================

The full model is a shift-based video encoder plus a transformer over the
non-image sequences, fused by concatenation. With only speed enabled the video
branch is not built at all, which keeps this run to a few seconds.
"""

# %%
from intformer.dataset import SignalSpec, generate_synthetic, split_by_video
from intformer.evaluation import evaluate
from intformer.model import IntFormerConfig
from intformer.training import TrainConfig, build_model, make_param_groups, train

tracks = generate_synthetic(40, SignalSpec(speed=1.0), seed=3)
split = split_by_video(tracks, (0.6, 0.2, 0.2), seed=0, stride=4)

config = IntFormerConfig(mask="0001")
model = build_model(config, seed=0)
print(f"{model.parameter_count():,} parameters")

# %%
# Hyperparameter presets. The pie profile splits the optimiser three ways.
full = build_model(IntFormerConfig(), seed=0)
for profile in ("pie", "jaad_beh"):
    groups = make_param_groups(full, TrainConfig.from_profile(profile))
    print(profile, [(g["name"], g["lr"], sum(p.numel() for p in g["params"])) for g in groups])

# %%
res = train(model, split, TrainConfig.from_profile("synthetic", epochs=15))
for h in res.history[::3]:
    print(h)
print("best epoch", res.best_epoch, "W_c", round(res.class_weight, 3))

# %%
report = evaluate(res.model, split.test, res.stats)
print(f"test acc {report.accuracy:.3f} auc {report.auc:.3f} f1 {report.f1:.3f} "
      f"({report.sequences_per_second:.0f} seq/s)")
