"""Checkpoint files.

Layout, little-endian throughout::

    b"MBAT"  u16 version=1
    u32 len, UTF-8 model spec text (sorted key=value lines)
    3 x section (params, adam m, adam v):
        u32 count, then per tensor: u32 name len, UTF-8 name, tensor segment
    u64 adam timestep

A tensor segment is u32 rank, u32 extents, f32 values row-major.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (CheckpointError, CheckpointFormatError, CheckpointShapeError, CheckpointTruncatedError,
                     ConfigError)
from .model import ModelSpec, ParamStore, param_shapes
from .tensor import read_segment, write_segment
from .train import OptimState

MAGIC = b"MBAT"
VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: ParamStore
    state: OptimState | None = None


def _write_str(fh, s: str) -> None:
    b = s.encode("utf-8")
    fh.write(struct.pack("<I", len(b)))
    fh.write(b)


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"checkpoint truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", _read(fh, 4))
    try:
        return _read(fh, n).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointFormatError(f"bad string in checkpoint: {exc}") from None


def _write_section(fh, tensors: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        _write_str(fh, name)
        write_segment(fh, t)


def _read_section(fh) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read(fh, 4))
    out = {}
    for _ in range(count):
        name = _read_str(fh)
        out[name] = read_segment(fh)
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    fh.write(struct.pack("<H", VERSION))
    _write_str(fh, ckpt.spec.to_text())
    state = ckpt.state or OptimState.for_params(ckpt.params)
    _write_section(fh, ckpt.params.params)
    _write_section(fh, state.m)
    _write_section(fh, state.v)
    fh.write(struct.pack("<Q", state.t))
    return fh.getvalue()


def loads(buf: bytes) -> Checkpoint:
    fh = io.BytesIO(buf)
    if fh.read(4) != MAGIC:
        raise CheckpointFormatError("not a checkpoint (bad magic)")
    (version,) = struct.unpack("<H", _read(fh, 2))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        spec = ModelSpec.from_text(_read_str(fh))
    except ConfigError as exc:
        raise CheckpointFormatError(f"bad model spec block: {exc}") from None
    params = _read_section(fh)
    m = _read_section(fh)
    v = _read_section(fh)
    (t,) = struct.unpack("<Q", _read(fh, 8))
    if fh.read(1):
        raise CheckpointFormatError("trailing bytes after checkpoint")

    expected = {name: shape for name, shape, _, _ in param_shapes(spec)}
    for label, section in (("params", params), ("m", m), ("v", v)):
        if list(section) != list(expected):
            raise CheckpointShapeError(f"{label}: tensor names {list(section)} do not match spec {list(expected)}")
        for name, arr in section.items():
            if arr.shape != expected[name]:
                raise CheckpointShapeError(f"{label}.{name}: shape {arr.shape}, spec says {expected[name]}")
    store = ParamStore()
    for name, arr in params.items():
        store.add(name, arr)
    return Checkpoint(spec, store, OptimState(m, v, t))


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return loads(buf)
