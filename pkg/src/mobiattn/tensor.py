"""Tensor helpers.

Tensors are plain float64 ``numpy`` arrays in N x C x H x W order (lower
rank for vectors and matrices). This module holds the few operations that
need a contract beyond what numpy gives: restricted broadcasting for gating,
seeded constructors, and the little-endian on-disk segment.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Sequence

import numpy as np

from .errors import CheckpointTruncatedError, ParameterError, ShapeError
from .rng import Xoshiro256pp

DTYPE = np.float64
MAX_RANK = 4


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not 1 <= len(shape) <= MAX_RANK:
        raise ShapeError(f"rank must be 1..{MAX_RANK}, got shape {shape}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {shape}")
    return shape


def zeros(shape: Sequence[int]) -> np.ndarray:
    return np.zeros(_check_shape(shape), dtype=DTYPE)


def fill(shape: Sequence[int], value: float) -> np.ndarray:
    return np.full(_check_shape(shape), float(value), dtype=DTYPE)


def random_uniform(shape: Sequence[int], seed: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    if lo > hi:
        raise ParameterError(f"random_uniform: lo={lo} > hi={hi}")
    shape = _check_shape(shape)
    rng = Xoshiro256pp(seed)
    return rng.uniform_array(int(np.prod(shape)), lo, hi).reshape(shape)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise product with two permitted broadcasts.

    ``b`` may have ``a``'s shape, be per-channel (``C`` for a C x H x W
    tensor, or ``N x C`` for a batch), or be per-position (``H x W``, or
    ``N x H x W`` for a batch). Anything else raises :class:`ShapeError`.
    """
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape == b.shape:
        return a * b
    if a.ndim == 3:
        c, h, w = a.shape
        if b.shape == (c,):
            return a * b[:, None, None]
        if b.shape == (h, w):
            return a * b[None, :, :]
    elif a.ndim == 4:
        n, c, h, w = a.shape
        if b.shape == (c,):
            return a * b[None, :, None, None]
        if b.shape == (n, c):
            return a * b[:, :, None, None]
        if b.shape == (h, w):
            return a * b[None, None, :, :]
        if b.shape == (n, h, w):
            return a * b[:, None, :, :]
    raise ShapeError(f"hadamard: cannot broadcast {b.shape} onto {a.shape} "
                     "(expected equal, per-channel or per-position shape)")


def write_segment(fh: BinaryIO, t: np.ndarray) -> None:
    """u32 rank, u32 extents, then f32 values row-major, little-endian."""
    t = np.asarray(t)
    _check_shape(t.shape)
    fh.write(struct.pack("<I", t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"expected {n} bytes, got {len(buf)}")
    return buf


def read_segment(fh: BinaryIO) -> np.ndarray:
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    if not 1 <= rank <= MAX_RANK:
        raise ShapeError(f"tensor segment has rank {rank}")
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
    _check_shape(shape)
    count = int(np.prod(shape))
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return data.astype(DTYPE).reshape(shape)
