"""Command-line entry points: synth, train, eval, ablate, inspect.

Every command writes ``manifest.json`` into its output directory with the resolved
config, seed, schema versions and git-style blob hashes of the inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .checkpoint import CHECKPOINT_SCHEMA, CheckpointError, load_checkpoint
from .config import CONFIG_SCHEMA, ConfigError, ExperimentConfig, dump_config, from_dict, load_config
from .dataset import (SCHEMA_VERSION, AnnotationError, ConfigurationError, class_counts,
                      class_weight_fraction, extract_windows, generate_synthetic, load_annotations,
                      save_annotations, split_by_video)
from .evaluation import (ablation_run, evaluate, write_ablation_summary, write_ablation_table)
from .frames import FRAMES_ENV, DirectoryFrames, SyntheticFrames, write_frames
from .training import TrainingDiverged, build_model, train

log = logging.getLogger("intformer")


class CommandError(RuntimeError):
    pass


def git_blob_hash(path: Path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def tree_hash(root: Path) -> str:
    """Hash of every file's relative path and blob hash under ``root``."""
    h = hashlib.sha1()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(f"{p.relative_to(root).as_posix()} {git_blob_hash(p)}\n".encode())
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, inputs: dict) -> None:
    manifest = {
        "command": command,
        "intformer_version": __version__,
        "seed": cfg.seed,
        "schemas": {"config": CONFIG_SCHEMA, "annotations": SCHEMA_VERSION,
                    "checkpoint": CHECKPOINT_SCHEMA},
        "config": json.loads(dump_config(cfg)),
        "inputs": inputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _prepare_out(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise CommandError(f"output {out} exists and is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else from_dict({})
    updates = {}
    if getattr(args, "profile", None):
        updates["profile"] = args.profile
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["out"] = args.out
    if updates:
        cfg = from_dict({**json.loads(dump_config(cfg)), **updates})
    return cfg


def _frames_for(cfg: ExperimentConfig, needed: bool):
    if not needed:
        return None
    root = cfg.data.frames or os.environ.get(FRAMES_ENV)
    if root is None:
        raise CommandError(f"images enabled but no frames directory (set data.frames or ${FRAMES_ENV})")
    return DirectoryFrames(root)


def _load_split(cfg: ExperimentConfig):
    d = cfg.data
    if not d.annotations:
        raise CommandError("data.annotations is not set")
    path = Path(d.annotations)
    if not path.is_file():
        raise CommandError(f"annotation file not found: {path}")
    tracks, diags = load_annotations(path, pose_dim=d.pose_dim, return_diagnostics=True)
    for diag in diags:
        print(f"warning: {diag}", file=sys.stderr)
    split = split_by_video(tracks, d.split, cfg.seed, d.obs_len, d.tte_min, d.tte_max, d.stride)
    return tracks, split, {"annotations": {"path": str(path), "blob": git_blob_hash(path)}}


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    out = _prepare_out(cfg.out, args.force)
    tracks = generate_synthetic(cfg.synth.n_tracks, cfg.synth.signal, cfg.seed)
    ann = out / "annotations.jsonl"
    save_annotations(tracks, ann)
    inputs = {}
    if cfg.synth.write_frames:
        d = cfg.data
        # frames any window can touch
        wanted = {t.track_id: sorted({int(f) for w in extract_windows(t, d.obs_len, d.tte_min, d.tte_max, 1)
                                      for f in w.frames}) for t in tracks}
        n = write_frames(SyntheticFrames(tracks, cfg.synth.signal, cfg.seed), tracks, out / "frames", wanted)
        inputs["frames_written"] = n
    n_nc, n_c = class_counts(tracks)
    write_manifest(out, "synth", cfg, inputs)
    print(f"tracks: {len(tracks)}  non-crossing: {n_nc}  crossing: {n_c}")
    if n_c:
        print(f"W_c = {float(class_weight_fraction(tracks)):.4f}")
    else:
        print("W_c undefined (no crossing tracks)")
    print(f"wrote {ann}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    tcfg = cfg.train_config()
    mcfg = cfg.model_config()
    _, split, inputs = _load_split(cfg)
    frames = _frames_for(cfg, mcfg.mask.images)
    if frames is not None:
        inputs["frames"] = {"path": str(frames.root), "tree": tree_hash(frames.root)}
    out = _prepare_out(cfg.out, args.force)
    model = build_model(mcfg, cfg.seed)
    res = train(model, split, tcfg, frames=frames, preprocess=cfg.preprocess, out_dir=out)
    (out / "norm_stats.json").write_text(res.stats.to_json() + "\n")
    (out / "split.json").write_text(json.dumps(split.videos, sort_keys=True, indent=1) + "\n")
    write_manifest(out, "train", cfg, inputs)
    last = res.history[-1] if res.history else {}
    print(f"profile {tcfg.profile}  mask {mcfg.mask}  W_c {res.class_weight:.4f}  "
          f"params {model.parameter_count()}")
    print(f"best epoch {res.best_epoch}  last {last}")
    print(f"checkpoint {res.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    model, stats, extra = load_checkpoint(args.checkpoint)
    if args.data:
        cfg = from_dict({**json.loads(dump_config(cfg)), "data": {**cfg.to_dict()["data"], "annotations": args.data}})
    _, split, inputs = _load_split(cfg)
    windows = getattr(split, args.partition)
    if not windows:
        raise CommandError(f"partition {args.partition!r} is empty")
    frames = _frames_for(cfg, model.mask.images)
    out = _prepare_out(cfg.out, args.force)
    report = evaluate(model, windows, stats, frames, preprocess=cfg.preprocess)
    inputs["checkpoint"] = {"path": str(args.checkpoint), "blob": git_blob_hash(Path(args.checkpoint))}
    (out / "metrics.json").write_text(json.dumps(
        {"partition": args.partition, **report.to_dict()}, sort_keys=True, indent=2) + "\n")
    write_manifest(out, "eval", cfg, inputs)
    print(f"{args.partition}: acc {report.accuracy:.3f}  auc {report.auc:.3f}  f1 {report.f1:.3f}  "
          f"n {report.n_samples}  {report.sequences_per_second:.1f} seq/s")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    if args.masks:
        cfg = from_dict({**json.loads(dump_config(cfg)),
                         "ablation": {**cfg.to_dict()["ablation"], "masks": args.masks.split(",")}})
    masks = cfg.ablation_masks()
    tcfg = cfg.train_config()
    base = cfg.model_config()
    _, split, inputs = _load_split(cfg)
    needs_images = masks is None or any(m.images for m in masks)
    frames = _frames_for(cfg, needs_images)
    out = _prepare_out(cfg.out, args.force)
    rows = ablation_run(base, split, masks, cfg.ablation.seeds, tcfg, frames, cfg.preprocess)
    write_ablation_table(rows, out / "ablation.csv")
    write_ablation_summary(rows, out / "ablation_summary.csv")
    write_manifest(out, "ablate", cfg, inputs)
    failed = sum(1 for r in rows if not r.ok)
    print(f"{len(rows)} runs, {failed} failed; table at {out / 'ablation.csv'}")
    return 1 if failed == len(rows) else 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.suffix == ".jsonl":
        tracks, diags = load_annotations(path, return_diagnostics=True)
        n_nc, n_c = class_counts(tracks)
        videos = {t.video_id for t in tracks}
        print(f"{len(tracks)} tracks in {len(videos)} videos; non-crossing {n_nc}, crossing {n_c}; "
              f"{len(diags)} rejected")
        for d in diags:
            print(f"  rejected: {d}")
        return 0
    model, stats, extra = load_checkpoint(path)
    print(json.dumps({"model_config": model.config.to_dict(),
                      "parameter_count": model.parameter_count(),
                      "norm_stats": None if stats is None else json.loads(stats.to_json()),
                      "extra": extra}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intformer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, profile=True):
        sp.add_argument("--config", help="YAML/JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        if profile:
            sp.add_argument("--profile", choices=["pie", "jaad_beh", "jaad_all", "synthetic"])

    sp = sub.add_parser("synth", help="write a synthetic annotation file and frames")
    common(sp, profile=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="annotation file (overrides data.annotations)")
    sp.add_argument("--partition", choices=["train", "val", "test"], default="test")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="input-importance ablation")
    common(sp)
    sp.add_argument("--masks", help="comma-separated masks, e.g. 0001,0010 or speed,pose+speed")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("inspect", help="summarise an annotation file or checkpoint")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ConfigError, ConfigurationError, AnnotationError, CheckpointError,
            TrainingDiverged, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
