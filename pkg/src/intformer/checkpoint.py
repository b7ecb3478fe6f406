"""Versioned, byte-deterministic checkpoint container.

A checkpoint is a zip archive with fixed timestamps holding ``manifest.json``
(schema version, model config, normalisation stats, extra metadata, tensor index)
and one ``.npy`` file per tensor of the model state dict.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .model import IntFormer, IntFormerConfig
from .preprocess import NormStats

CHECKPOINT_SCHEMA = "intformer-checkpoint/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def state_to_bytes(model: IntFormer, stats: NormStats | None, extra: dict | None = None) -> bytes:
    state = model.state_dict()
    manifest = {
        "schema": CHECKPOINT_SCHEMA,
        "model_config": model.config.to_dict(),
        "norm_stats": None if stats is None else json.loads(stats.to_json()),
        "extra": extra or {},
        "tensors": {k: {"dtype": str(v.dtype), "shape": list(v.shape)} for k, v in state.items()},
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode())
        for name, t in state.items():
            arr = io.BytesIO()
            np.save(arr, t.detach().cpu().numpy(), allow_pickle=False)
            _entry(zf, f"tensors/{name}.npy", arr.getvalue())
    return buf.getvalue()


def save_checkpoint(path, model: IntFormer, stats: NormStats | None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(state_to_bytes(model, stats, extra))
    return path


def load_checkpoint(path) -> tuple[IntFormer, NormStats | None, dict]:
    """Rebuild the model; raises :class:`CheckpointError` on a bad container or schema."""
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint container ({exc})") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except (KeyError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: missing or corrupt manifest") from exc
        schema = manifest.get("schema")
        if schema != CHECKPOINT_SCHEMA:
            raise CheckpointError(f"{path}: checkpoint schema {schema!r}, expected {CHECKPOINT_SCHEMA!r}")
        model = IntFormer(IntFormerConfig.from_dict(manifest["model_config"]))
        state = {}
        try:
            for name in manifest["tensors"]:
                state[name] = torch.from_numpy(np.load(io.BytesIO(zf.read(f"tensors/{name}.npy"))))
        except (KeyError, ValueError, zipfile.BadZipFile) as exc:
            raise CheckpointError(f"{path}: corrupt tensor data ({exc})") from exc
    model.load_state_dict(state)
    stats = manifest.get("norm_stats")
    return model, (NormStats.from_dict(stats) if stats is not None else None), manifest.get("extra", {})
