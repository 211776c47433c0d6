"""Checkpoint directories: ``manifest.json`` plus one raw little-endian file per array."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


def _safe(name: str) -> str:
    return name.replace("/", "_")


def save_arrays(directory, arrays: dict[str, np.ndarray], manifest: dict) -> Path:
    directory = Path(directory)
    (directory / "arrays").mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        fname = f"arrays/{_safe(name)}.bin"
        (directory / fname).write_bytes(arr.astype(dtype, copy=False).tobytes())
        entries.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape), "file": fname})
    manifest = dict(manifest, format_version=CHECKPOINT_VERSION, arrays=entries)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_arrays(directory) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise CheckpointError(f"{directory} has no manifest.json")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint format {manifest.get('format_version')} unsupported")
    arrays = {}
    for e in manifest["arrays"]:
        raw = (directory / e["file"]).read_bytes()
        dtype = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        if len(raw) != count * dtype.itemsize:
            raise CheckpointError(f"array {e['name']} has {len(raw)} bytes, expected {count * dtype.itemsize}")
        arrays[e["name"]] = np.frombuffer(raw, dtype=dtype).reshape(e["shape"]).copy()
    return manifest, arrays
