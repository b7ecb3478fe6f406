"""Declarative experiment configuration (YAML or JSON), validated before any run."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .dataset import SignalSpec
from .model import IntFormerConfig
from .preprocess import FeatureMask, PreprocessConfig
from .seq_encoder import SeqEncoderConfig
from .training import PROFILE_MASKS, TrainConfig
from .video_encoder import VideoEncoderConfig

CONFIG_SCHEMA = "intformer-experiment/1"


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    annotations: str | None = None
    frames: str | None = None
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    stride: int = 1
    obs_len: int = 16
    tte_min: int = 30
    tte_max: int = 60
    pose_dim: int = 36


@dataclass
class SynthConfig:
    n_tracks: int = 200
    signal: SignalSpec = field(default_factory=SignalSpec)
    write_frames: bool = True


@dataclass
class AblationConfig:
    masks: list[str] | None = None  # default: all 15 non-empty combinations
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    profile: str = "synthetic"
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: dict = field(default_factory=dict)  # overrides on top of the profile preset
    model: dict = field(default_factory=dict)  # IntFormerConfig fields
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def train_config(self) -> TrainConfig:
        overrides = dict(self.train)
        overrides.setdefault("seed", self.seed)
        overrides.pop("profile", None)
        try:
            return TrainConfig.from_profile(self.profile, **overrides)
        except TypeError as exc:
            raise ConfigError(f"train: {exc}") from exc

    def model_config(self) -> IntFormerConfig:
        m = dict(self.model)
        m.setdefault("mask", PROFILE_MASKS[self.profile])
        video = dict(m.pop("video", {}))
        pp = self.preprocess
        video.setdefault("frames", pp.obs_len // 2)
        video.setdefault("channels", pp.channels)
        video.setdefault("height", pp.height)
        video.setdefault("width", pp.width)
        seq = dict(m.pop("seq", {}))
        seq.setdefault("seq_len", pp.obs_len)
        seq.setdefault("pose_dim", self.data.pose_dim)
        try:
            return IntFormerConfig(video=VideoEncoderConfig(**_check_keys(video, VideoEncoderConfig, "model.video")),
                                   seq=SeqEncoderConfig(**_check_keys(seq, SeqEncoderConfig, "model.seq")),
                                   **_check_keys(m, IntFormerConfig, "model"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc

    def ablation_masks(self) -> list[FeatureMask] | None:
        if self.ablation.masks is None:
            return None
        try:
            return [FeatureMask.parse(m) for m in self.ablation.masks]
        except ValueError as exc:
            raise ConfigError(f"ablation.masks: {exc}") from exc

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _check_keys(d: dict, cls, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return d


def _build(cls, d: Any, where: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    _check_keys(d, cls, where)
    kwargs = {}
    for f in fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        sub = {"data": DataConfig, "synth": SynthConfig, "signal": SignalSpec,
               "preprocess": PreprocessConfig, "ablation": AblationConfig}.get(f.name)
        if sub is not None and dataclasses.is_dataclass(sub) and f.name != "train":
            v = _build(sub, v, f"{where}.{f.name}" if where else f.name)
        elif f.name == "split":
            v = tuple(float(x) for x in v)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(d: dict) -> ExperimentConfig:
    d = dict(d or {})
    schema = d.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"config schema {schema!r} unsupported (expected {CONFIG_SCHEMA!r})")
    cfg = _build(ExperimentConfig, d, "")
    if cfg.profile not in PROFILE_MASKS:
        raise ConfigError(f"unknown profile {cfg.profile!r}")
    _check_keys(cfg.train, TrainConfig, "train")
    # fail early on bad nested values
    cfg.train_config()
    cfg.model_config()
    cfg.ablation_masks()
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse ({exc})") from exc
    return from_dict(d or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps({"schema": CONFIG_SCHEMA, **cfg.to_dict()}, sort_keys=True, indent=2)
