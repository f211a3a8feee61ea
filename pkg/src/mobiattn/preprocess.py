"""Resizing, normalization and augmentation for ``C x H x W`` images."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DatasetError, ParameterError
from .rng import Xoshiro256pp, derive_seed


@dataclass(frozen=True)
class DatasetStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        std = np.asarray(self.std, dtype=np.float64)
        if np.any(~(std > 0)):
            raise ParameterError(f"std must be > 0 per channel, got {std}")


@dataclass(frozen=True)
class AugmentConfig:
    rotation_max_deg: float = 15.0
    flip_probability: float = 0.5
    scale_range: tuple[float, float] = (0.9, 1.1)
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    contrast_range: tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        s_lo, s_hi = self.scale_range
        b_lo, b_hi = self.brightness_range
        a_lo, a_hi = self.contrast_range
        if self.rotation_max_deg < 0:
            raise ParameterError("rotation_max_deg must be >= 0")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ParameterError("flip_probability must be in [0, 1]")
        if not 0 < s_lo <= s_hi:
            raise ParameterError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if not b_lo <= b_hi:
            raise ParameterError(f"brightness_range unordered: {self.brightness_range}")
        if not 0 < a_lo <= a_hi:
            raise ParameterError(f"contrast_range must satisfy 0 < lo <= hi, got {self.contrast_range}")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentConfig":
        return cls(0.0, 0.0, (1.0, 1.0), (0.0, 0.0), (1.0, 1.0), seed)


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, border: str = "zero") -> np.ndarray:
    """Sample every channel of ``img`` at fractional pixel coordinates.

    ``border="zero"`` treats pixels outside the image as 0; ``"clamp"``
    clamps the coordinates into the image first.
    """
    c, h, w = img.shape
    if border == "clamp":
        ys = np.clip(ys, 0.0, h - 1)
        xs = np.clip(xs, 0.0, w - 1)
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    out = np.zeros((c,) + ys.shape, dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = img[:, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(ok, wy * wx, 0.0) * vals
    return out


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"resize: output extents must be >= 1, got {out_h}x{out_w}")
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return np.array(img, dtype=np.float64)
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(img, yy, xx, border="clamp")


def minmax_normalize(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def compute_stats(dataset: Sequence[np.ndarray]) -> DatasetStats:
    """Per-channel mean and population std over every pixel of every image."""
    if len(dataset) == 0:
        raise DatasetError("compute_stats: empty dataset")
    c = dataset[0].shape[0]
    pixels = np.concatenate([np.asarray(img, dtype=np.float64).reshape(c, -1) for img in dataset], axis=1)
    if not np.all(np.isfinite(pixels)):
        raise DatasetError("compute_stats: dataset contains non-finite pixel values")
    mean = pixels.mean(axis=1)
    std = np.sqrt(((pixels - mean[:, None]) ** 2).mean(axis=1))
    for ch in range(c):
        if not std[ch] > 0:
            raise DatasetError(f"compute_stats: channel {ch} has zero variance")
    return DatasetStats(mean, std)


def zscore(img: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Per-channel (x - mean) / std. Works on C x H x W and N x C x H x W."""
    mean = np.asarray(stats.mean, dtype=np.float64)
    std = np.asarray(stats.std, dtype=np.float64)
    if np.any(~(std > 0)):
        raise ParameterError("zscore: std must be > 0")
    img = np.asarray(img, dtype=np.float64)
    expand = (slice(None),) + (None,) * 2
    if img.ndim == 4:
        expand = (None,) + expand
    return (img - mean[expand]) / std[expand]


def _centered_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray, float, float]:
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy,
                         np.arange(w, dtype=np.float64) - cx, indexing="ij")
    return yy, xx, cy, cx


def rotate(img: np.ndarray, theta: float) -> np.ndarray:
    """Rotate by ``theta`` radians about the image center.

    In (x = column, y = row) coordinates a pixel at offset (x, y) from the
    center moves to (x cos - y sin, x sin + y cos). Implemented by inverse
    mapping with bilinear sampling; samples falling outside are zero.
    """
    if not math.isfinite(theta):
        raise ParameterError("rotate: theta must be finite")
    if theta == 0.0:
        return np.array(img, dtype=np.float64)
    _, h, w = img.shape
    yy, xx, cy, cx = _centered_grid(h, w)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    src_x = cos_t * xx + sin_t * yy
    src_y = -sin_t * xx + cos_t * yy
    return bilinear_sample(img, src_y + cy, src_x + cx, border="zero")


def hflip(img: np.ndarray) -> np.ndarray:
    return np.array(img[..., ::-1], dtype=np.float64)


def scale(img: np.ndarray, s: float) -> np.ndarray:
    """Zoom about the center by ``s`` on a fixed canvas (s > 1 zooms in, zero fill)."""
    if not s > 0:
        raise ParameterError(f"scale: factor must be > 0, got {s}")
    if s == 1.0:
        return np.array(img, dtype=np.float64)
    _, h, w = img.shape
    yy, xx, cy, cx = _centered_grid(h, w)
    return bilinear_sample(img, yy / s + cy, xx / s + cx, border="zero")


def brightness_contrast(img: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """alpha * img + beta; no clamping."""
    if not alpha > 0:
        raise ParameterError(f"brightness_contrast: alpha must be > 0, got {alpha}")
    return alpha * np.asarray(img, dtype=np.float64) + beta


@dataclass(frozen=True)
class AugmentDraw:
    theta: float
    flip: bool
    scale: float
    alpha: float
    beta: float


def draw_augment(cfg: AugmentConfig, index: int) -> AugmentDraw:
    """Parameters for sample ``index``; fixed draw order theta, flip, s, alpha, beta."""
    rng = Xoshiro256pp(derive_seed(cfg.seed, index))
    max_rad = math.radians(cfg.rotation_max_deg)
    theta = rng.uniform(-max_rad, max_rad)
    flip = rng.random() < cfg.flip_probability
    s = rng.uniform(*cfg.scale_range)
    alpha = rng.uniform(*cfg.contrast_range)
    beta = rng.uniform(*cfg.brightness_range)
    return AugmentDraw(theta, flip, s, alpha, beta)


def apply_draw(img: np.ndarray, d: AugmentDraw) -> np.ndarray:
    out = rotate(img, d.theta)
    if d.flip:
        out = hflip(out)
    out = scale(out, d.scale)
    return brightness_contrast(out, d.alpha, d.beta)


def augment(img: np.ndarray, cfg: AugmentConfig, index: int) -> np.ndarray:
    """rotate -> hflip -> scale -> brightness/contrast, seeded by (cfg.seed, index)."""
    return apply_draw(img, draw_augment(cfg, index))
