"""Binary PGM (P5) and PPM (P6) reading and writing, maxval 255 only."""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import DatasetError

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise ValueError("truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pnm(buf: bytes) -> np.ndarray:
    """Decode a P5/P6 file into an ``H x W x C`` uint8 array (C = 1 or 3)."""
    (magic, w, h, maxval), offset = _header_tokens(buf, 4)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"unsupported magic {magic!r}; only P5/P6 are read")
    width, height, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"maxval {maxval} unsupported (need 255)")
    if width < 1 or height < 1:
        raise ValueError(f"bad extents {width}x{height}")
    n = width * height * channels
    raster = buf[offset:offset + n]
    if len(raster) != n:
        raise ValueError(f"raster truncated: {len(raster)} of {n} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels).copy()


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"need uint8 H x W x 1|3, got {img.dtype} {img.shape}")
    magic = b"P5" if img.shape[2] == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.shape[1], img.shape[0])
    return header + np.ascontiguousarray(img).tobytes()


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read a PGM/PPM as a ``C x H x W`` float64 array of byte values 0..255."""
    try:
        with open(path, "rb") as fh:
            hwc = decode_pnm(fh.read())
    except (OSError, ValueError) as exc:
        raise DatasetError(f"{path}: unreadable image ({exc})") from exc
    return hwc.transpose(2, 0, 1).astype(np.float64)


def to_bytes(img: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Map a ``C x H x W`` float image with range [lo, hi] to H x W x C uint8 (clipped)."""
    scaled = (np.asarray(img, dtype=np.float64) - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def write_image(path: str | os.PathLike, img: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> None:
    """Write a ``C x H x W`` float image (C = 1 or 3) as PGM/PPM."""
    with open(path, "wb") as fh:
        fh.write(encode_pnm(to_bytes(img, lo, hi)))
