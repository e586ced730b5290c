"""Checkpoint directory: ``manifest.json`` plus one raw little-endian array per parameter."""

from __future__ import annotations

import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError
from .network import IcnConfig, IcnParams, param_shapes

FORMAT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(path: str | Path, params: IcnParams, metadata: dict | None = None) -> Path:
    """Write ``params``; ``metadata`` (normalizers, match table, run info) goes into the manifest."""
    root = Path(path)
    (root / "params").mkdir(parents=True, exist_ok=True)
    dtype = params.dtype.name
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported parameter dtype {dtype}")
    entries = {}
    for name, arr in params.arrays.items():
        fname = f"params/{name}.bin"
        (root / fname).write_bytes(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())
        entries[name] = {"file": fname, "shape": list(arr.shape), "dtype": _DTYPES[dtype]}
    manifest = {
        "format_version": FORMAT_VERSION,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "numpy": np.__version__,
        "python": platform.python_version(),
        "config": params.config.to_dict(),
        "config_hash": params.config.config_hash(),
        "parameters": entries,
        "metadata": metadata or {},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def read_manifest(path: str | Path) -> dict:
    f = Path(path) / "manifest.json"
    if not f.exists():
        raise DataError(f"{path} is not a checkpoint (manifest.json missing)")
    manifest = json.loads(f.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {manifest.get('format_version')}")
    return manifest


def load_checkpoint(path: str | Path) -> tuple[IcnParams, dict]:
    root = Path(path)
    manifest = read_manifest(root)
    cfg = IcnConfig.from_dict(manifest["config"])
    expected = param_shapes(cfg)
    arrays = {}
    for name, shape in expected.items():
        entry = manifest["parameters"].get(name)
        if entry is None:
            raise DataError(f"checkpoint lacks parameter {name}")
        raw = (root / entry["file"]).read_bytes()
        itemsize = np.dtype(entry["dtype"]).itemsize
        if len(raw) != itemsize * int(np.prod(shape)):
            raise DataError(f"{name}: {len(raw)} bytes on disk, expected shape {shape} of {entry['dtype']}")
        arr = np.frombuffer(raw, dtype=entry["dtype"])
        arrays[name] = arr.reshape(shape).astype(np.dtype(entry["dtype"]).newbyteorder("="))
    return IcnParams(cfg, arrays), manifest.get("metadata", {})
