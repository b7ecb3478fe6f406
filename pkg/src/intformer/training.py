"""Weighted BCE, per-branch parameter groups and the seeded training loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import state_to_bytes
from .dataset import DatasetSplit, class_weight_fraction
from .metrics import accuracy, auc_roc, f1_score
from .model import IntFormer, IntFormerConfig
from .preprocess import BundleCache, NormStats, PreprocessConfig, compute_norm_stats

logger = logging.getLogger(__name__)

PROFILES = ("pie", "jaad_beh", "jaad_all", "synthetic")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"loss became {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    profile: str = "synthetic"
    batch_size: int = 8
    epochs: int = 60
    optimizer: str = "adamw"
    backbone_lr: float | None = None
    seq_encoder_lr: float | None = None
    unified_lr: float | None = 3e-4
    # PIE reads 6.5e-4 as the absolute shift-offset rate; "multiplier" scales the base rate
    shift_multiplier: float = 0.1
    shift_lr_mode: str = "multiplier"
    weight_decay: float = 1e-4
    seed: int = 0
    eval_batch_size: int = 32

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.optimizer not in ("adam", "adamw"):
            raise ValueError(f"optimizer must be adam or adamw, got {self.optimizer!r}")
        if self.shift_lr_mode not in ("absolute", "multiplier"):
            raise ValueError("shift_lr_mode must be 'absolute' or 'multiplier'")
        split_rates = self.backbone_lr is not None or self.seq_encoder_lr is not None
        if (self.unified_lr is not None) == split_rates:
            raise ValueError("specify either unified_lr or both backbone_lr and seq_encoder_lr")
        if split_rates and (self.backbone_lr is None or self.seq_encoder_lr is None):
            raise ValueError("backbone_lr and seq_encoder_lr must be given together")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    @property
    def shift_lr(self) -> float:
        base = self.unified_lr if self.unified_lr is not None else self.backbone_lr
        if self.shift_lr_mode == "absolute":
            return self.shift_multiplier
        return base * self.shift_multiplier

    @classmethod
    def from_profile(cls, profile: str, **overrides) -> "TrainConfig":
        presets = {
            "pie": dict(optimizer="adam", backbone_lr=1.1e-3, seq_encoder_lr=4.3e-3, unified_lr=None,
                        shift_multiplier=6.5e-4, shift_lr_mode="absolute", weight_decay=0.0),
            "jaad_beh": dict(optimizer="adamw", unified_lr=1e-4, shift_multiplier=0.1,
                             shift_lr_mode="multiplier", weight_decay=1e-3),
            "jaad_all": dict(optimizer="adamw", unified_lr=3e-4, shift_multiplier=0.1,
                             shift_lr_mode="multiplier", weight_decay=1e-4),
            "synthetic": dict(optimizer="adamw", unified_lr=3e-4, shift_multiplier=0.1,
                              shift_lr_mode="multiplier", weight_decay=1e-4),
        }
        if profile not in presets:
            raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
        params = dict(profile=profile, batch_size=8, **presets[profile])
        params.update(overrides)
        return cls(**params)

    def to_dict(self) -> dict:
        return asdict(self)


# feature mask each dataset profile trains with by default
PROFILE_MASKS = {"pie": "1111", "jaad_beh": "1100", "jaad_all": "1100", "synthetic": "1111"}


def weighted_bce(logit, label, w_c: float = 1.0, reduction: str = "mean"):
    """-[w_c * y * log s(z) + (1 - y) * log(1 - s(z))] via softplus.

    Python scalars in give a float out (computed in float64).
    """
    if not w_c > 0:
        raise ValueError(f"class weight must be positive, got {w_c}")
    scalar = not torch.is_tensor(logit)
    z = torch.as_tensor(logit, dtype=torch.float64 if scalar else None)
    y = torch.as_tensor(label, dtype=z.dtype, device=z.device)
    if not torch.all(torch.isfinite(z)):
        raise FloatingPointError("non-finite logit")
    loss = w_c * y * F.softplus(-z) + (1 - y) * F.softplus(z)
    if scalar:
        return float(loss)
    if reduction == "mean":
        return loss.mean()
    if reduction == "sum":
        return loss.sum()
    return loss


def make_param_groups(model: IntFormer, config: TrainConfig) -> list[dict]:
    """Optimizer groups: shift offsets, remaining backbone, sequence encoder + fusion head.

    Split-rate profiles (PIE) give up to three groups; unified profiles give two
    (shift offsets at the reduced rate, everything else at ``unified_lr``). Empty groups
    are dropped.
    """
    shift_ids = {id(p) for p in model.shift_parameters()}
    backbone_ids = set() if model.video is None else {id(p) for p in model.video.parameters()}
    shift, backbone, rest = [], [], []
    for p in model.parameters():
        if not p.requires_grad:
            continue
        if id(p) in shift_ids:
            shift.append(p)
        elif id(p) in backbone_ids:
            backbone.append(p)
        else:
            rest.append(p)
    if config.unified_lr is not None:
        groups = [
            {"name": "shift", "params": shift, "lr": config.shift_lr},
            {"name": "unified", "params": backbone + rest, "lr": config.unified_lr},
        ]
    else:
        groups = [
            {"name": "backbone", "params": backbone, "lr": config.backbone_lr},
            {"name": "shift", "params": shift, "lr": config.shift_lr},
            {"name": "seq_fusion", "params": rest, "lr": config.seq_encoder_lr},
        ]
    groups = [g for g in groups if g["params"]]
    seen: set[int] = set()
    for g in groups:
        for p in g["params"]:
            if id(p) in seen:
                raise ValueError(f"parameter assigned to two groups (second: {g['name']})")
            seen.add(id(p))
    return groups


def make_optimizer(model: IntFormer, config: TrainConfig) -> torch.optim.Optimizer:
    groups = make_param_groups(model, config)
    if config.optimizer == "adam":
        return torch.optim.Adam(groups, weight_decay=config.weight_decay)
    return torch.optim.AdamW(groups, weight_decay=config.weight_decay)


def build_model(config: IntFormerConfig, seed: int) -> IntFormer:
    torch.manual_seed(seed)
    return IntFormer(config)


@torch.no_grad()
def predict_proba(model: IntFormer, cache: BundleCache, batch_size: int = 32) -> np.ndarray:
    was_training = model.training
    model.eval()
    out = []
    for i in range(0, len(cache), batch_size):
        out.append(torch.sigmoid(model(cache.batch(np.arange(i, min(i + batch_size, len(cache)))))))
    model.train(was_training)
    return torch.cat(out).double().numpy()


def _scores(probs: np.ndarray, labels: np.ndarray) -> dict:
    preds = (probs >= 0.5).astype(int)
    auc = auc_roc(probs, labels) if 0 < labels.sum() < len(labels) else float("nan")
    return {"acc": accuracy(preds, labels), "auc": auc, "f1": f1_score(preds, labels)}


@dataclass
class TrainResult:
    model: IntFormer
    stats: NormStats
    class_weight: float
    history: list[dict]
    timing: list[dict]
    best_epoch: int
    checkpoint: bytes = field(repr=False, default=b"")
    checkpoint_path: Path | None = None


def _round(x: float) -> float:
    return x if not math.isfinite(x) else float(f"{x:.10g}")


def train(model: IntFormer, split: DatasetSplit, config: TrainConfig, frames=None,
          preprocess: PreprocessConfig | None = None, out_dir=None,
          stats: NormStats | None = None, caches: tuple | None = None) -> TrainResult:
    """Seeded mini-batch training with per-epoch validation and best-validation selection.

    Validation AUC picks the kept weights (validation F1 breaks ties, then the earlier
    epoch); without a validation partition the final epoch is kept. With ``out_dir``
    the checkpoint, ``history.jsonl`` and ``timing.jsonl`` are written there.
    ``caches`` may pass prebuilt (train, val) bundle caches, which must have been made
    with ``stats``.
    """
    if not split.train:
        raise ValueError("training split is empty")
    w_frac = class_weight_fraction(split.train)
    w_c = float(w_frac)
    stats = stats or compute_norm_stats(split.train)
    mask = model.mask
    if caches is not None:
        train_cache, val_cache = caches
        train_cache = train_cache.select(mask)
        val_cache = None if val_cache is None else val_cache.select(mask)
    else:
        train_cache = BundleCache(split.train, stats, mask, frames, preprocess)
        val_cache = BundleCache(split.val, stats, mask, frames, preprocess) if split.val else None

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(model, config)
    history, timing = [], []
    best_key, best_epoch = None, 0
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    n = len(train_cache)

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = train_cache.batch(order[start:start + config.batch_size])
            try:
                loss = weighted_bce(model(batch), batch["label"], w_c)
            except FloatingPointError:
                raise TrainingDiverged(epoch, b, float("nan")) from None
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, b, float(loss))
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch["label"])
        record = {"epoch": epoch, "train_loss": _round(total / n)}
        if val_cache is not None:
            scores = _scores(predict_proba(model, val_cache, config.eval_batch_size), val_cache.labels)
            record.update({f"val_{k}": _round(v) for k, v in scores.items()})
            # ties go to the later epoch, so a saturated validation set does not pin epoch 1
            key = (np.nan_to_num(scores["auc"], nan=-1.0), scores["f1"], scores["acc"])
            if best_key is None or key >= best_key:
                best_key, best_epoch = key, epoch
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
        else:
            best_epoch = epoch
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
        history.append(record)
        timing.append({"epoch": epoch, "wall_time": time.perf_counter() - t0})
        logger.info("epoch %d %s", epoch, record)

    model.load_state_dict(best_state)
    model.eval()
    extra = {"train_config": config.to_dict(), "best_epoch": best_epoch,
             "class_weight": [w_frac.numerator, w_frac.denominator],
             "preprocess": asdict(preprocess or PreprocessConfig())}
    blob = state_to_bytes(model, stats, extra)
    result = TrainResult(model=model, stats=stats, class_weight=w_c, history=history,
                         timing=timing, best_epoch=best_epoch, checkpoint=blob)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / f"{config.profile}_seed{config.seed}_epoch{best_epoch:03d}.ckpt"
        ckpt.write_bytes(blob)
        write_jsonl(out / "history.jsonl", history)
        write_jsonl(out / "timing.jsonl", timing)
        result.checkpoint_path = ckpt
    return result


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
