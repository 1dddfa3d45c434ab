"""Single-file checkpoint container.

Layout::

    bytes 0..3    magic  b"SKDF"
    bytes 4..7    format version, uint32 little-endian
    bytes 8..11   header length N, uint32 little-endian
    bytes 12..    header: JSON (utf-8, sorted keys, compact separators)
    rest          parameter payload: float32 little-endian arrays,
                  concatenated in header block order

The header lists every block's name and shape plus an arbitrary JSON ``meta``
section (configs, noise schedule, region layout, metrics history), making a
checkpoint loadable without any external context.  Keys are sorted and
blocks are written in sorted name order, so identical contents always give
byte-identical files — save -> load -> save is a fixed point.  Writes are
atomic (temp file in the target directory, then rename).

Model parameters live under name prefixes: ``multi_ae/...``, ``image_ae/...``,
``tau/...``, ``unet/...``; optimizer state under ``optim/...``.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"SKDF"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Structural problem with a checkpoint file."""


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    blocks: dict[str, np.ndarray] = field(default_factory=dict)

    def add_module(self, prefix: str, module: torch.nn.Module) -> None:
        for key, tensor in module.state_dict().items():
            self.blocks[f"{prefix}/{key}"] = (
                tensor.detach().to(torch.float32).cpu().numpy().copy()
            )

    def load_module(self, prefix: str, module: torch.nn.Module) -> None:
        state = {}
        want = module.state_dict()
        for key, ref in want.items():
            name = f"{prefix}/{key}"
            if name not in self.blocks:
                raise CheckpointError(f"missing block {name}")
            state[key] = torch.from_numpy(self.blocks[name].copy()).reshape(ref.shape)
        module.load_state_dict(state)

    def group_names(self) -> set[str]:
        return {name.split("/", 1)[0] for name in self.blocks}

    def add_optimizer(self, prefix: str, opt: torch.optim.Optimizer) -> None:
        params = [p for g in opt.param_groups for p in g["params"]]
        for i, p in enumerate(params):
            state = opt.state.get(p, {})
            for key, val in state.items():
                arr = (
                    val.detach().to(torch.float32).cpu().numpy()
                    if isinstance(val, torch.Tensor)
                    else np.asarray([float(val)], dtype=np.float32)
                )
                self.blocks[f"{prefix}/{i}/{key}"] = np.atleast_1d(arr).copy()

    def load_optimizer(self, prefix: str, opt: torch.optim.Optimizer) -> None:
        params = [p for g in opt.param_groups for p in g["params"]]
        for i, p in enumerate(params):
            head = f"{prefix}/{i}/"
            entries = {
                name[len(head) :]: arr
                for name, arr in self.blocks.items()
                if name.startswith(head)
            }
            if not entries:
                continue
            state: dict = {}
            for key, arr in entries.items():
                if key == "step":
                    state[key] = torch.tensor(float(arr[0]))
                else:
                    state[key] = torch.from_numpy(arr.copy()).reshape(p.shape)
            opt.state[p] = state


def serialize_checkpoint(ckpt: Checkpoint) -> bytes:
    """Canonical byte form: equal checkpoints serialize to equal bytes."""
    names = sorted(ckpt.blocks)
    header = {
        "format_version": FORMAT_VERSION,
        "meta": ckpt.meta,
        "blocks": [
            {"name": n, "shape": list(ckpt.blocks[n].shape)} for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header_bytes)), header_bytes]
    parts += [np.ascontiguousarray(ckpt.blocks[n], dtype="<f4").tobytes() for n in names]
    return b"".join(parts)


def content_hash(ckpt: Checkpoint) -> str:
    """sha256 of the canonical bytes; equals file_sha256 of a saved copy."""
    return hashlib.sha256(serialize_checkpoint(ckpt)).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(serialize_checkpoint(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )
    if len(raw) < 12 + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc

    payload = raw[12 + hlen :]
    blocks: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["blocks"]:
        name, shape = entry["name"], tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        if offset + nbytes > len(payload):
            raise CheckpointError(f"block {name} is truncated")
        blocks[name] = (
            np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{len(payload) - offset} unexpected trailing bytes")
    return Checkpoint(meta=header["meta"], blocks=blocks)


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
