"""Versioned checkpoint container.

A checkpoint is a zip archive with ``manifest.json`` (format tag, version,
layer-spec tree, provenance) and one little-endian float64 ``.npy`` member per
parameter and buffer. Zip CRCs catch truncation and bit rot.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError
from .core import layer_from_spec

FORMAT = "uctecg-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    model: object
    arch: dict | None = None
    train_config: dict | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)


def _npy_bytes(a):
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a, dtype="<f8"), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(model, path, arch=None, train_config=None, seed=None, extra=None):
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "layers": model.spec(),
        "arch": arch,
        "train_config": train_config,
        "seed": seed,
        "extra": extra or {},
        "params": [name for name, _, _ in model.named_parameters()],
        "buffers": [name for name, _, _ in model.named_buffers()],
    }
    tmp = f"{os.fspath(path)}.tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        for name, layer, key in model.named_parameters():
            zf.writestr(f"params/{name}.npy", _npy_bytes(layer.params[key]))
        for name, layer, key in model.named_buffers():
            zf.writestr(f"buffers/{name}.npy", _npy_bytes(layer.buffers[key]))
    os.replace(tmp, path)


def _read_array(zf, member, expected_shape):
    a = np.load(io.BytesIO(zf.read(member)), allow_pickle=False)
    if a.shape != expected_shape:
        raise CheckpointError(f"{member}: shape {a.shape}, model expects {expected_shape}")
    return a.astype(np.float64)


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the model from its layer-spec tree and restore every array.

    Any inconsistency raises :class:`CheckpointError`; no partially loaded
    model is ever returned.
    """
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format") != FORMAT:
                raise CheckpointError(f"{path}: not a {FORMAT} file")
            if manifest.get("version") != VERSION:
                raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
            model = layer_from_spec(manifest["layers"])
            params = list(model.named_parameters())
            buffers = list(model.named_buffers())
            if [n for n, _, _ in params] != manifest["params"] or [n for n, _, _ in buffers] != manifest["buffers"]:
                raise CheckpointError(f"{path}: parameter list does not match the layer specs")
            for name, layer, key in params:
                layer.params[key] = _read_array(zf, f"params/{name}.npy", layer.params[key].shape)
                layer.grads[key] = np.zeros_like(layer.params[key])
            for name, layer, key in buffers:
                layer.buffers[key] = _read_array(zf, f"buffers/{name}.npy", layer.buffers[key].shape)
    except CheckpointError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError, TypeError) as err:
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({err})") from err
    return Checkpoint(model, manifest["arch"], manifest["train_config"], manifest["seed"], manifest["extra"])
