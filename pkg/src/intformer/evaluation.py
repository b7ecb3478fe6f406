"""Test-set evaluation, throughput and the input-importance ablation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .dataset import DatasetSplit, ObservationWindow
from .metrics import accuracy, auc_roc, confusion, f1_score
from .model import IntFormer, IntFormerConfig
from .preprocess import BundleCache, FeatureMask, NormStats, PreprocessConfig, compute_norm_stats
from .training import TrainConfig, build_model, predict_proba, train

logger = logging.getLogger(__name__)

# imgs / bbs / pose / speed: single inputs, then growing combinations, ending with all four
ABLATION_MASKS: tuple[FeatureMask, ...] = tuple(FeatureMask.from_code(c) for c in (
    "1000", "0100", "0010", "0001", "0011", "0101", "1001", "0110",
    "1010", "0111", "1110", "1011", "1101", "1100", "1111",
))


@dataclass
class MetricsReport:
    accuracy: float
    auc: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_samples: int
    parameter_count: int
    sequences_per_second: float | None
    config_fingerprint: str
    threshold: float = 0.5

    def __post_init__(self):
        if self.tp + self.fp + self.tn + self.fn != self.n_samples:
            raise ValueError("confusion counts do not sum to n_samples")

    def to_dict(self) -> dict:
        return asdict(self)


def config_fingerprint(model: IntFormer, stats: NormStats | None) -> str:
    payload = json.dumps({"model": model.config.to_dict(),
                          "stats": None if stats is None else json.loads(stats.to_json())},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@torch.no_grad()
def measure_throughput(model: IntFormer, batch: dict, n_warmup: int = 10, n_trials: int = 50) -> float:
    """Median of batch_size / forward wall time, in sequences per second."""
    was_training = model.training
    model.eval()
    size = len(batch["label"]) if "label" in batch else next(
        v.shape[0] for k, v in batch.items() if torch.is_tensor(v))
    for _ in range(n_warmup):
        model(batch)
    rates = []
    for _ in range(max(1, n_trials)):
        t0 = time.perf_counter()
        model(batch)
        rates.append(size / max(time.perf_counter() - t0, 1e-12))
    model.train(was_training)
    return float(statistics.median(rates))


def evaluate(model: IntFormer, windows: Sequence[ObservationWindow], stats: NormStats, frames=None,
             threshold: float = 0.5, preprocess: PreprocessConfig | None = None,
             throughput_trials: int = 5, batch_size: int = 32) -> MetricsReport:
    """Full-pass metrics on ``windows``; set ``throughput_trials=0`` to skip timing."""
    if not windows:
        raise ValueError("no windows to evaluate")
    cache = BundleCache(windows, stats, model.mask, frames, preprocess)
    return evaluate_cache(model, cache, stats, threshold, throughput_trials, batch_size)


def evaluate_cache(model: IntFormer, cache: BundleCache, stats: NormStats, threshold: float = 0.5,
                   throughput_trials: int = 0, batch_size: int = 32) -> MetricsReport:
    probs = predict_proba(model, cache, batch_size)
    labels = cache.labels.astype(int)
    preds = (probs >= threshold).astype(int)
    tp, fp, tn, fn = confusion(preds, labels)
    auc = auc_roc(probs, labels) if 0 < labels.sum() < len(labels) else float("nan")
    sps = None
    if throughput_trials > 0:
        sample = cache.batch(np.arange(min(8, len(cache))))
        sps = measure_throughput(model, sample, n_warmup=1, n_trials=throughput_trials)
    return MetricsReport(
        accuracy=accuracy(preds, labels), auc=auc, f1=f1_score(preds, labels),
        tp=tp, fp=fp, tn=tn, fn=fn, n_samples=len(labels),
        parameter_count=model.parameter_count(), sequences_per_second=sps,
        config_fingerprint=config_fingerprint(model, stats), threshold=threshold,
    )


@dataclass
class AblationRow:
    mask: FeatureMask
    seed: int
    report: MetricsReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


def ablation_run(base_config: IntFormerConfig, split: DatasetSplit,
                 masks: Sequence[FeatureMask] | None = None, seeds: Sequence[int] = (0, 1, 2),
                 train_config: TrainConfig | None = None, frames=None,
                 preprocess: PreprocessConfig | None = None) -> list[AblationRow]:
    """Train and evaluate one model per (mask, seed) under identical hyperparameters.

    Rows come back in mask order, seeds inner. A failing run is recorded as a failed
    row and the sweep continues. Evaluation uses the test partition (validation if
    test is empty).
    """
    masks = list(ABLATION_MASKS if masks is None else masks)
    if not masks:
        raise ValueError("empty mask list")
    tcfg = train_config or TrainConfig.from_profile("synthetic")
    eval_windows = split.test or split.val
    if not split.train or not eval_windows:
        raise ValueError("ablation needs a training partition and a test or validation partition")
    # preprocess once for the union of all masks; each run takes a view
    union = FeatureMask(*(any(m.as_tuple()[i] for m in masks) for i in range(4)))
    stats = compute_norm_stats(split.train)
    train_cache = BundleCache(split.train, stats, union, frames, preprocess)
    val_cache = BundleCache(split.val, stats, union, frames, preprocess) if split.val else None
    eval_cache = BundleCache(eval_windows, stats, union, frames, preprocess)
    rows = []
    for mask in masks:
        for seed in seeds:
            try:
                model = build_model(replace(base_config, mask=mask), seed)
                res = train(model, split, replace(tcfg, seed=seed), stats=stats,
                            caches=(train_cache, val_cache))
                report = evaluate_cache(res.model, eval_cache.select(mask), stats)
                rows.append(AblationRow(mask, seed, report))
                logger.info("ablation %s seed %d: acc %.3f auc %.3f f1 %.3f", mask.code, seed,
                            report.accuracy, report.auc, report.f1)
            except Exception as exc:  # noqa: BLE001 - one bad run must not stop the sweep
                logger.exception("ablation %s seed %d failed", mask.code, seed)
                rows.append(AblationRow(mask, seed, error=f"{type(exc).__name__}: {exc}"))
    return rows


def summarize(rows: Sequence[AblationRow]) -> list[dict]:
    """Per-mask mean and range (max - min) of each metric over successful seeds."""
    out = []
    seen: list[FeatureMask] = []
    for r in rows:
        if r.mask not in seen:
            seen.append(r.mask)
    for mask in seen:
        good = [r.report for r in rows if r.mask == mask and r.ok]
        entry = {"mask": mask, "n_ok": len(good),
                 "n_failed": sum(1 for r in rows if r.mask == mask and not r.ok)}
        for name, attr in (("acc", "accuracy"), ("auc", "auc"), ("f1", "f1")):
            vals = [getattr(g, attr) for g in good]
            entry[f"{name}_mean"] = float(np.mean(vals)) if vals else float("nan")
            entry[f"{name}_range"] = float(np.ptp(vals)) if vals else float("nan")
        out.append(entry)
    return out


def _flags(mask: FeatureMask) -> list[int]:
    return [int(b) for b in mask.as_tuple()]


def write_ablation_table(rows: Sequence[AblationRow], path) -> Path:
    """Per-run table: imgs,bbs,pose,speed,acc,auc,f1,seed,status with 3-decimal metrics."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["imgs", "bbs", "pose", "speed", "acc", "auc", "f1", "seed", "status"])
        for r in rows:
            if r.ok:
                m = r.report
                w.writerow(_flags(r.mask) + [f"{m.accuracy:.3f}", f"{m.auc:.3f}", f"{m.f1:.3f}",
                                             r.seed, "ok"])
            else:
                w.writerow(_flags(r.mask) + ["", "", "", r.seed, f"failed: {r.error}"])
    return path


def write_ablation_summary(rows: Sequence[AblationRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["imgs", "bbs", "pose", "speed", "acc", "acc_range", "auc", "auc_range",
                    "f1", "f1_range", "n_ok", "n_failed"])
        for s in summarize(rows):
            w.writerow(_flags(s["mask"]) + [f"{s[k]:.3f}" for k in (
                "acc_mean", "acc_range", "auc_mean", "auc_range", "f1_mean", "f1_range")]
                + [s["n_ok"], s["n_failed"]])
    return path


def read_ablation_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
