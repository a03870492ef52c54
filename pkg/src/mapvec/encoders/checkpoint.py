"""Single-file checkpoints: JSON manifest plus raw little-endian float32 tensors.

Layout: 4-byte magic, uint32 little-endian manifest length, UTF-8 JSON
manifest, then each tensor's float32 bytes in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np
import torch
from torch import nn

from ..errors import FormatError, UsageError

MAGIC = b"MVC1"


def parameter_manifest(module: nn.Module, meta: dict | None = None) -> dict:
    return {
        "meta": meta or {},
        "tensors": [
            {"name": name, "shape": list(p.shape)} for name, p in module.named_parameters()
        ],
    }


def save_checkpoint(module: nn.Module, path: Union[str, Path], meta: dict | None = None) -> None:
    manifest = parameter_manifest(module, meta)
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, p in module.named_parameters():
            fh.write(p.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())


def read_manifest(path: Union[str, Path]) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(module: nn.Module, path: Union[str, Path]) -> dict:
    """Load tensors into ``module`` (shapes must match); returns the manifest meta."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(n).decode("utf-8"))
        params = dict(module.named_parameters())
        recorded = [t["name"] for t in manifest["tensors"]]
        if recorded != list(params.keys()):
            raise UsageError(f"{path}: checkpoint parameters do not match module parameters")
        for entry in manifest["tensors"]:
            p = params[entry["name"]]
            if list(p.shape) != entry["shape"]:
                raise UsageError(
                    f"{path}: shape mismatch for {entry['name']}: {entry['shape']} vs {list(p.shape)}"
                )
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise FormatError(f"{path}: truncated tensor data for {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
            with torch.no_grad():
                p.copy_(torch.from_numpy(arr).to(p.dtype))
    return manifest["meta"]


def manifest_parameter_count(path: Union[str, Path]) -> int:
    """Total scalar count recorded in a checkpoint manifest."""
    manifest = read_manifest(path)
    total = 0
    for entry in manifest["tensors"]:
        total += int(np.prod(entry["shape"])) if entry["shape"] else 1
    return total
